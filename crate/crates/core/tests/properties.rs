use proptest::prelude::*;
use ptt_core::annotparse::strip_with_spans;
use ptt_core::metric::{aggregate, compute_weight, count_matched, evaluate_sentence, BleuConfig, MetricKind};
use ptt_core::types::{Domain, Split};
use ptt_core::{extract_annotations, match_term, normalize, strip_parentheticals, SentencePair};
use serde_json::Map;

const TERMS: [&str; 6] = [
    "adversarial training",
    "bayesian optimization",
    "Graph Neural Networks",
    "de finetti's theorem",
    "jet quenching",
    "quarkonia suppression",
];

fn filler() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["모델", "학습을", "위한", "구조", "x", "3.5", ",", "데이터로"]), 0..5)
        .prop_map(|w| w.join(" "))
}

fn term_idx() -> impl Strategy<Value = usize> {
    0..TERMS.len()
}

/// Filler text interleaved with annotated terms. Returns the text and the
/// indices of the terms inserted, in order.
fn annotated() -> impl Strategy<Value = (String, Vec<usize>)> {
    (filler(), prop::collection::vec((term_idx(), filler(), any::<bool>()), 0..6)).prop_map(|(head, groups)| {
        let mut s = head;
        let mut inserted = Vec::new();
        for (t, tail, upper) in groups {
            let term = if upper { TERMS[t].to_uppercase() } else { TERMS[t].to_owned() };
            s.push_str(&format!(" 용어({term}) {tail}"));
            inserted.push(t);
        }
        (s, inserted)
    })
}

fn pair(target: &str, terms: Vec<String>) -> SentencePair {
    SentencePair {
        id: "p".into(),
        cluster_id: 0,
        domain: Domain::Ai,
        split: Split::Test,
        source: String::new(),
        target: target.into(),
        terms,
        extra: Map::new(),
    }
}

/// Maximum bipartite matching between annotations and term occurrences.
fn kuhn_matching(left: &[String], right: &[String]) -> usize {
    fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &adj[u] {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            if owner[v].is_none_or(|w| augment(w, adj, seen, owner)) {
                owner[v] = Some(u);
                return true;
            }
        }
        false
    }
    let adj: Vec<Vec<usize>> = left
        .iter()
        .map(|a| (0..right.len()).filter(|&j| match_term(a, &right[j])).collect())
        .collect();
    let mut owner = vec![None; right.len()];
    (0..left.len())
        .filter(|&u| augment(u, &adj, &mut vec![false; right.len()], &mut owner))
        .count()
}

proptest! {
    #[test]
    fn inserted_groups_are_recovered((text, inserted) in annotated()) {
        let ex = extract_annotations(&normalize(&text));
        prop_assert_eq!(ex.unbalanced, 0);
        prop_assert_eq!(ex.annotations.len(), inserted.len());
        for (a, &t) in ex.annotations.iter().zip(&inserted) {
            prop_assert!(match_term(&a.inner_text, TERMS[t]));
        }
    }

    #[test]
    fn stripping_is_idempotent((text, _) in annotated(), pick in prop::collection::vec(term_idx(), 0..4)) {
        let terms: Vec<&str> = pick.iter().map(|&i| TERMS[i]).collect();
        let once = strip_parentheticals(&normalize(&text), &terms);
        let twice = strip_parentheticals(&normalize(&once), &terms);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn removed_spans_are_exactly_matching_groups((text, inserted) in annotated(), pick in prop::collection::vec(term_idx(), 0..4)) {
        let terms: Vec<&str> = pick.iter().map(|&i| TERMS[i]).collect();
        let norm = normalize(&text);
        let (_, spans) = strip_with_spans(&norm, &terms);
        let expected = inserted.iter().filter(|i| pick.contains(i)).count();
        prop_assert_eq!(spans.len(), expected);
        for span in spans {
            let group = &norm.as_str()[span];
            prop_assert!(group.starts_with('(') && group.ends_with(')'));
        }
    }

    #[test]
    fn match_term_is_symmetric_and_reflexive(a in term_idx(), b in term_idx(), pad in "[ \t]{0,3}", upper in any::<bool>()) {
        let x = if upper { TERMS[a].to_uppercase() } else { TERMS[a].to_owned() };
        let x = format!("{pad}{x}{pad}");
        prop_assert!(match_term(&x, &x));
        prop_assert!(match_term(&x, TERMS[a]));
        prop_assert_eq!(match_term(&x, TERMS[b]), match_term(TERMS[b], &x));
        prop_assert_eq!(match_term(&x, TERMS[b]), a == b);
    }

    #[test]
    fn count_matched_equals_max_matching((text, _) in annotated(), occ in prop::collection::vec(term_idx(), 0..7)) {
        let anns = extract_annotations(&normalize(&text)).annotations;
        let terms: Vec<String> = occ.iter().map(|&i| TERMS[i].to_owned()).collect();
        let inner: Vec<String> = anns.iter().map(|a| a.inner_text.clone()).collect();
        prop_assert_eq!(count_matched(&anns, &terms), kuhn_matching(&inner, &terms));
    }

    #[test]
    fn weight_is_bounded_and_exact(n_kor in 0usize..50, n_eng in 0usize..50) {
        let w = compute_weight(n_kor, n_eng);
        let x = w.to_scalar::<f64>();
        prop_assert!((0.0..=1.0).contains(&x));
        if n_eng == 0 || n_kor >= n_eng {
            prop_assert!(w.is_one());
        } else {
            prop_assert_eq!(x, n_kor as f64 / n_eng as f64);
        }
    }

    #[test]
    fn weight_is_monotone_in_annotations(n_eng in 1usize..30, a in 0usize..30, b in 0usize..30) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(compute_weight(lo, n_eng) <= compute_weight(hi, n_eng));
    }

    #[test]
    fn weighted_never_exceeds_raw((text, inserted) in annotated(), drop in prop::collection::vec(any::<bool>(), 6)) {
        let terms: Vec<String> = inserted.iter().map(|&i| TERMS[i].to_owned()).collect();
        let p = pair(&text, terms);
        // Remove some of the annotations from the hypothesis.
        let norm = normalize(&text);
        let mut hyp = norm.as_str().to_owned();
        let anns = extract_annotations(&norm).annotations;
        for (a, d) in anns.iter().zip(&drop).rev() {
            if *d {
                hyp.replace_range(a.inner_span.clone(), "");
            }
        }
        let e = evaluate_sentence::<f64>(&hyp, &p, &[MetricKind::Bleu], &BleuConfig::default(), None);
        let raw = e.raw[&MetricKind::Bleu];
        let weighted = e.weighted[&MetricKind::Bleu];
        prop_assert!(weighted <= raw + 1e-12);
        prop_assert!((weighted - e.weight * raw).abs() <= 1e-12);
        prop_assert!(e.n_kor <= e.n_eng);
    }

    #[test]
    fn stripping_treats_both_sides_alike((text, inserted) in annotated()) {
        let terms: Vec<String> = inserted.iter().map(|&i| TERMS[i].to_owned()).collect();
        let p = pair(&text, terms);
        let e = evaluate_sentence::<f64>(&text, &p, &[MetricKind::Bleu], &BleuConfig::default(), None);
        prop_assert_eq!(&e.stripped_hyp, &e.stripped_ref);
        prop_assert!(e.weight_exact.is_one());
    }

    #[test]
    fn aggregate_ignores_order(
        (text, inserted) in annotated(),
        hyps in prop::collection::vec(filler(), 1..12),
        seed in any::<u64>(),
    ) {
        let terms: Vec<String> = inserted.iter().map(|&i| TERMS[i].to_owned()).collect();
        let p = pair(&text, terms);
        let evals: Vec<_> = hyps
            .iter()
            .map(|h| evaluate_sentence::<f64>(h, &p, &[MetricKind::Bleu], &BleuConfig::default(), None))
            .collect();
        let mut shuffled = evals.clone();
        ptt_core::corpus::seeded_shuffle(&mut shuffled, seed);
        prop_assert_eq!(aggregate(&evals).unwrap(), aggregate(&shuffled).unwrap());
    }
}

#[test]
fn weighting_is_linear_in_raw() {
    let w = compute_weight(2, 3).to_scalar::<f64>();
    for raw in [0.0, 0.5, 17.25, 99.999, 100.0] {
        for k in [0.5, 2.0, 3.0] {
            assert!((w * (k * raw) - k * (w * raw)).abs() <= 1e-12);
        }
    }
}
