//! Sentence-level BLEU with effective n-gram order and floor smoothing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_script::{Script, UnicodeScript};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Tokenization {
    /// Split on Unicode whitespace only.
    Whitespace,
    /// Split on whitespace, then emit every Hangul, Han, Hiragana or Katakana
    /// character as its own token. Runs of other characters stay together.
    #[default]
    CjkChars,
}

impl Tokenization {
    pub fn describe(self) -> &'static str {
        match self {
            Tokenization::Whitespace => "whitespace",
            Tokenization::CjkChars => "whitespace + per-character Hangul/CJK",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Smoothing {
    None,
    /// A zero match count for order n is replaced by `epsilon / total_n`.
    #[default]
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BleuConfig {
    pub max_order: usize,
    pub tokenize: Tokenization,
    pub smoothing: Smoothing,
    pub epsilon: f64,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_order: 4,
            tokenize: Tokenization::CjkChars,
            smoothing: Smoothing::Floor,
            epsilon: 0.1,
        }
    }
}

impl BleuConfig {
    pub fn describe(&self) -> String {
        let smoothing = match self.smoothing {
            Smoothing::None => "none".to_owned(),
            Smoothing::Floor => format!("floor(eps={})", self.epsilon),
        };
        format!(
            "sentence BLEU, max_order={}, tokenize={}, smoothing={}",
            self.max_order,
            self.tokenize.describe(),
            smoothing
        )
    }
}

fn is_cjk(c: char) -> bool {
    matches!(
        c.script(),
        Script::Hangul | Script::Han | Script::Hiragana | Script::Katakana
    )
}

pub fn tokenize(text: &str, mode: Tokenization) -> Vec<&str> {
    match mode {
        Tokenization::Whitespace => text.split_whitespace().collect(),
        Tokenization::CjkChars => {
            let mut out = Vec::new();
            for word in text.split_whitespace() {
                let mut run_start: Option<usize> = None;
                for (i, c) in word.char_indices() {
                    if is_cjk(c) {
                        if let Some(s) = run_start.take() {
                            out.push(&word[s..i]);
                        }
                        out.push(&word[i..i + c.len_utf8()]);
                    } else if run_start.is_none() {
                        run_start = Some(i);
                    }
                }
                if let Some(s) = run_start {
                    out.push(&word[s..]);
                }
            }
            out
        }
    }
}

/// Clipped n-gram statistics for one hypothesis/reference pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuStats {
    pub matches: Vec<usize>,
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<'t, 'a>(tokens: &'t [&'a str], n: usize) -> HashMap<&'t [&'a str], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn compute(hyp: &str, reference: &str, config: &BleuConfig) -> Self {
        let h = tokenize(hyp, config.tokenize);
        let r = tokenize(reference, config.tokenize);
        let mut matches = Vec::with_capacity(config.max_order);
        let mut totals = Vec::with_capacity(config.max_order);
        for n in 1..=config.max_order {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            let m = hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum();
            matches.push(m);
            totals.push((h.len() + 1).saturating_sub(n));
        }
        BleuStats {
            matches,
            totals,
            hyp_len: h.len(),
            ref_len: r.len(),
        }
    }

    pub fn brevity_penalty<S: Scalar>(&self) -> S {
        if self.hyp_len == 0 {
            return S::zero();
        }
        if self.hyp_len >= self.ref_len {
            S::one()
        } else {
            (S::one() - S::from_count(self.ref_len) / S::from_count(self.hyp_len)).exp()
        }
    }

    /// Score on the 0–100 scale.
    pub fn score<S: Scalar>(&self, config: &BleuConfig) -> S {
        if self.hyp_len == 0 || self.matches.first().copied().unwrap_or(0) == 0 {
            return S::zero();
        }
        let eps = S::from_f64(config.epsilon).unwrap();
        let mut log_sum = S::zero();
        let mut orders = 0usize;
        for (&m, &t) in self.matches.iter().zip(&self.totals) {
            // Effective order: stop at the first order the hypothesis is too short for.
            if t == 0 {
                break;
            }
            let p = if m > 0 {
                S::from_count(m) / S::from_count(t)
            } else {
                match config.smoothing {
                    Smoothing::Floor => eps / S::from_count(t),
                    Smoothing::None => return S::zero(),
                }
            };
            log_sum = log_sum + p.ln();
            orders += 1;
        }
        let geo = (log_sum / S::from_count(orders)).exp();
        S::hundred() * self.brevity_penalty::<S>() * geo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BleuScore<S> {
    pub score: S,
    /// Set when the hypothesis had no tokens; the score is then 0.
    pub empty_hypothesis: bool,
}

/// Sentence BLEU of `hyp` against a single reference.
pub fn bleu<S: Scalar>(hyp: &str, reference: &str, config: &BleuConfig) -> BleuScore<S> {
    let stats = BleuStats::compute(hyp, reference, config);
    BleuScore {
        score: stats.score(config),
        empty_hypothesis: stats.hyp_len == 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(h: &str, r: &str) -> f64 {
        bleu::<f64>(h, r, &BleuConfig::default()).score
    }

    #[test]
    fn cjk_tokenization() {
        assert_eq!(
            tokenize("순환 신경 구조의 RNN-based 모델.", Tokenization::CjkChars),
            vec!["순", "환", "신", "경", "구", "조", "의", "RNN-based", "모", "델", "."]
        );
        assert_eq!(tokenize("ab가cd", Tokenization::CjkChars), vec!["ab", "가", "cd"]);
        assert_eq!(tokenize("  a  b ", Tokenization::Whitespace), vec!["a", "b"]);
    }

    #[test]
    fn self_bleu_is_100() {
        assert_eq!(b("모델이 학습한다", "모델이 학습한다"), 100.0);
        assert_eq!(b("x", "x"), 100.0);
        assert_eq!(bleu::<f32>("a b c d e", "a b c d e", &BleuConfig::default()).score, 100.0);
    }

    #[test]
    fn zero_overlap_is_zero() {
        assert_eq!(b("alpha beta", "gamma delta"), 0.0);
    }

    #[test]
    fn empty_hypothesis_is_flagged() {
        let s = bleu::<f64>("   ", "참조 문장", &BleuConfig::default());
        assert_eq!(s.score, 0.0);
        assert!(s.empty_hypothesis);
    }

    #[test]
    fn brevity_penalty_applies() {
        let cfg = BleuConfig {
            tokenize: Tokenization::Whitespace,
            ..BleuConfig::default()
        };
        let s = bleu::<f64>("a b", "a b c d", &cfg).score;
        // precisions 1, 1; BP = exp(1 - 4/2)
        assert!((s - 100.0 * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn unsmoothed_zero_precision_gives_zero() {
        let cfg = BleuConfig {
            tokenize: Tokenization::Whitespace,
            smoothing: Smoothing::None,
            ..BleuConfig::default()
        };
        assert_eq!(bleu::<f64>("a x b y", "a b c d", &cfg).score, 0.0);
        let smoothed = BleuConfig {
            smoothing: Smoothing::Floor,
            ..cfg
        };
        assert!(bleu::<f64>("a x b y", "a b c d", &smoothed).score > 0.0);
    }
}
