//! The PTT metric.
//!
//! For each sentence, `W_terms = min(|T_Kor| / |T_Eng|, 1)` where `|T_Eng|` is
//! the number of term occurrences in the source and `|T_Kor|` the number of
//! those occurrences found as parenthetical annotations in the hypothesis.
//! A base metric `M` is computed on both texts after matched parentheticals
//! are removed, and `M_PTT = W_terms × M`. Corpus scores are plain means of
//! the per-sentence values.

mod bleu;
mod weight;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotparse::{extract_annotations, normalize, strip_parentheticals};
use crate::scalar::Scalar;
use crate::scorer::{NeuralMetric, NeuralScorer, ScoreItem};
use crate::types::{Domain, SentencePair};

pub use bleu::{bleu, tokenize, BleuConfig, BleuScore, BleuStats, Smoothing, Tokenization};
pub use weight::{compute_weight, count_matched, TermWeight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Bleu,
    Comet,
    Bertscore,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Bleu, MetricKind::Comet, MetricKind::Bertscore];

    pub fn neural(self) -> Option<NeuralMetric> {
        match self {
            MetricKind::Bleu => None,
            MetricKind::Comet => Some(NeuralMetric::Comet),
            MetricKind::Bertscore => Some(NeuralMetric::Bertscore),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Bleu => "bleu",
            MetricKind::Comet => "comet",
            MetricKind::Bertscore => "bertscore",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bleu" => Ok(MetricKind::Bleu),
            "comet" => Ok(MetricKind::Comet),
            "bertscore" | "bert" => Ok(MetricKind::Bertscore),
            other => Err(format!("unknown metric `{other}` (expected bleu, comet or bertscore)")),
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("nothing to aggregate")]
    NothingToAggregate,
    #[error("{hyps} hypotheses for {pairs} sentence pairs")]
    LengthMismatch { hyps: usize, pairs: usize },
}

/// Evaluation of one hypothesis against one [`SentencePair`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEval<S = f64> {
    pub id: String,
    pub domain: Domain,
    /// |T_Eng|
    pub n_eng: usize,
    /// |T_Kor|
    pub n_kor: usize,
    pub weight: S,
    pub weight_exact: TermWeight,
    pub stripped_hyp: String,
    pub stripped_ref: String,
    pub raw: BTreeMap<MetricKind, S>,
    pub weighted: BTreeMap<MetricKind, S>,
    /// Requested metrics that could not be computed, with the reason.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub unavailable: BTreeMap<MetricKind, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl<S: Scalar> SentenceEval<S> {
    pub fn is_partial(&self) -> bool {
        !self.unavailable.is_empty()
    }

    fn record(&mut self, kind: MetricKind, raw: S) {
        self.raw.insert(kind, raw);
        self.weighted.insert(kind, self.weight * raw);
    }
}

/// Term counting, weighting and stripping; everything except the base metrics.
fn prepare<S: Scalar>(hyp: &str, pair: &SentencePair) -> SentenceEval<S> {
    let hyp_n = normalize(hyp);
    let ref_n = normalize(&pair.target);
    let extraction = extract_annotations(&hyp_n);
    let n_eng = pair.terms.len();
    let n_kor = count_matched(&extraction.annotations, &pair.terms);
    let weight_exact = compute_weight(n_kor, n_eng);
    let mut diagnostics = Vec::new();
    if extraction.unbalanced > 0 {
        diagnostics.push(format!(
            "hypothesis has {} unbalanced parenthesis character(s)",
            extraction.unbalanced
        ));
    }
    SentenceEval {
        id: pair.id.clone(),
        domain: pair.domain,
        n_eng,
        n_kor,
        weight: weight_exact.to_scalar(),
        weight_exact,
        stripped_hyp: strip_parentheticals(&hyp_n, &pair.terms),
        stripped_ref: strip_parentheticals(&ref_n, &pair.terms),
        raw: BTreeMap::new(),
        weighted: BTreeMap::new(),
        unavailable: BTreeMap::new(),
        diagnostics,
    }
}

fn apply_bleu<S: Scalar>(eval: &mut SentenceEval<S>, config: &BleuConfig) {
    let score = bleu::<S>(&eval.stripped_hyp, &eval.stripped_ref, config);
    if score.empty_hypothesis {
        eval.diagnostics.push("empty hypothesis".to_owned());
    }
    eval.record(MetricKind::Bleu, score.score);
}

fn score_item<S>(eval: &SentenceEval<S>, pair: &SentencePair) -> ScoreItem {
    ScoreItem {
        src: pair.source.clone(),
        hyp: eval.stripped_hyp.clone(),
        reference: eval.stripped_ref.clone(),
    }
}

/// Evaluates `hyp` against `pair`.
///
/// Neural metrics need `scorer`. When it is missing or fails, the metric is
/// listed in [`SentenceEval::unavailable`] and every other requested metric is
/// still computed.
pub fn evaluate_sentence<S: Scalar>(
    hyp: &str,
    pair: &SentencePair,
    metrics: &[MetricKind],
    bleu_config: &BleuConfig,
    scorer: Option<&dyn NeuralScorer>,
) -> SentenceEval<S> {
    let mut eval = prepare::<S>(hyp, pair);
    for &kind in metrics {
        match kind.neural() {
            None => apply_bleu(&mut eval, bleu_config),
            Some(neural) => {
                let Some(scorer) = scorer else {
                    eval.unavailable.insert(kind, "no scorer configured".to_owned());
                    continue;
                };
                let item = score_item(&eval, pair);
                match scorer.score_items(neural, std::slice::from_ref(&item)) {
                    Ok(scored) => eval.record(kind, S::from_wire(scored.scores[0])),
                    Err(e) => {
                        eval.unavailable.insert(kind, e.to_string());
                    }
                }
            }
        }
    }
    eval
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub metrics: Vec<MetricKind>,
    pub bleu: BleuConfig,
    /// Worker threads for the per-sentence phase.
    pub jobs: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            metrics: vec![MetricKind::Bleu],
            bleu: BleuConfig::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CorpusEvaluation<S> {
    /// One record per input pair, in input order.
    pub sentences: Vec<SentenceEval<S>>,
    /// Scorer model identifier per neural metric that was computed.
    pub model_ids: BTreeMap<MetricKind, String>,
    /// Neural metrics that failed for the whole corpus.
    pub unavailable: BTreeMap<MetricKind, String>,
}

/// Evaluates aligned hypotheses against `pairs`.
///
/// Term weights and BLEU are computed in parallel on up to `jobs` threads.
/// Neural metrics are then requested in batches through `scorer`, one metric
/// at a time; a failing metric marks only its own column unavailable.
pub fn evaluate_corpus<S: Scalar, H: AsRef<str> + Sync>(
    hyps: &[H],
    pairs: &[SentencePair],
    options: &EvalOptions,
    scorer: Option<&dyn NeuralScorer>,
) -> Result<CorpusEvaluation<S>, MetricError> {
    if hyps.len() != pairs.len() {
        return Err(MetricError::LengthMismatch {
            hyps: hyps.len(),
            pairs: pairs.len(),
        });
    }
    let want_bleu = options.metrics.contains(&MetricKind::Bleu);
    let local = |(hyp, pair): (&H, &SentencePair)| {
        let mut eval = prepare::<S>(hyp.as_ref(), pair);
        if want_bleu {
            apply_bleu(&mut eval, &options.bleu);
        }
        eval
    };
    let mut sentences: Vec<SentenceEval<S>> = if options.jobs <= 1 {
        hyps.iter().zip(pairs).map(local).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| hyps.par_iter().zip(pairs.par_iter()).map(local).collect())
    };

    let mut model_ids = BTreeMap::new();
    let mut unavailable = BTreeMap::new();
    for &kind in &options.metrics {
        let Some(neural) = kind.neural() else { continue };
        if unavailable.contains_key(&kind) || model_ids.contains_key(&kind) {
            continue;
        }
        let outcome = match scorer {
            None => Err("no scorer configured".to_owned()),
            Some(scorer) if !sentences.is_empty() => {
                let items: Vec<ScoreItem> = sentences
                    .iter()
                    .zip(pairs)
                    .map(|(e, p)| score_item(e, p))
                    .collect();
                scorer.score_items(neural, &items).map_err(|e| e.to_string())
            }
            Some(_) => continue,
        };
        match outcome {
            Ok(scored) => {
                for (eval, &s) in sentences.iter_mut().zip(&scored.scores) {
                    eval.record(kind, S::from_wire(s));
                }
                model_ids.insert(kind, scored.model_id);
            }
            Err(reason) => {
                log::warn!("{kind} unavailable: {reason}");
                for eval in &mut sentences {
                    eval.unavailable.insert(kind, reason.clone());
                }
                unavailable.insert(kind, reason);
            }
        }
    }
    Ok(CorpusEvaluation {
        sentences,
        model_ids,
        unavailable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate<S = f64> {
    pub n_sentences: usize,
    pub mean_weight: S,
    pub mean_raw: BTreeMap<MetricKind, S>,
    pub mean_weighted: BTreeMap<MetricKind, S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport<S = f64> {
    #[serde(flatten)]
    pub overall: Aggregate<S>,
    pub per_domain: BTreeMap<Domain, Aggregate<S>>,
}

impl<S: Scalar> CorpusReport<S> {
    pub fn mean_weight(&self) -> S {
        self.overall.mean_weight
    }

    pub fn n_sentences(&self) -> usize {
        self.overall.n_sentences
    }
}

/// Mean with values summed in sorted order, so the result does not depend
/// on input order.
fn mean<S: Scalar>(mut values: Vec<S>) -> S {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = S::from_count(values.len());
    values.into_iter().fold(S::zero(), |acc, v| acc + v) / n
}

fn aggregate_group<S: Scalar>(evals: &[&SentenceEval<S>]) -> Aggregate<S> {
    let mut raw: BTreeMap<MetricKind, Vec<S>> = BTreeMap::new();
    let mut weighted: BTreeMap<MetricKind, Vec<S>> = BTreeMap::new();
    for e in evals {
        for (&k, &v) in &e.raw {
            raw.entry(k).or_default().push(v);
        }
        for (&k, &v) in &e.weighted {
            weighted.entry(k).or_default().push(v);
        }
    }
    Aggregate {
        n_sentences: evals.len(),
        mean_weight: mean(evals.iter().map(|e| e.weight).collect()),
        mean_raw: raw.into_iter().map(|(k, v)| (k, mean(v))).collect(),
        mean_weighted: weighted.into_iter().map(|(k, v)| (k, mean(v))).collect(),
    }
}

/// Corpus means of weight, raw and weighted metrics, overall and per domain.
pub fn aggregate<S: Scalar>(evals: &[SentenceEval<S>]) -> Result<CorpusReport<S>, MetricError> {
    if evals.is_empty() {
        return Err(MetricError::NothingToAggregate);
    }
    let all: Vec<&SentenceEval<S>> = evals.iter().collect();
    let mut by_domain: BTreeMap<Domain, Vec<&SentenceEval<S>>> = BTreeMap::new();
    for e in evals {
        by_domain.entry(e.domain).or_default().push(e);
    }
    Ok(CorpusReport {
        overall: aggregate_group(&all),
        per_domain: by_domain
            .into_iter()
            .map(|(d, es)| (d, aggregate_group(&es)))
            .collect(),
    })
}
