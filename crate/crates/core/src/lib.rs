//! Evaluation toolkit for parenthetical terminology translation (PTT).
//!
//! A PTT translation renders every technical term in the target language and
//! appends the original source-language term in parentheses, e.g.
//! `적대적 훈련(adversarial training)`. This crate provides:
//!
//! * [`annotparse`]: extraction and stripping of `head(term)` annotations,
//! * [`metric`]: the term-annotation weight, sentence-level BLEU and the
//!   weighted metric built from them,
//! * [`scorer`]: a client for a neural-metric sidecar (COMET, BERTScore),
//! * [`corpus`]: the line-JSON dataset format, validation and leak-free splits.
//!
//! Metric code is generic over the floating-point type ([`Scalar`]); the term
//! weight itself is an exact rational ([`TermWeight`]). Concrete aliases for
//! `f64` and `f32` are exported below.

pub mod annotparse;
pub mod corpus;
pub mod metric;
pub mod scalar;
pub mod scorer;
pub mod types;

pub use annotparse::{
    extract_annotations, match_term, normalize, strip_parentheticals, Extraction,
    NormalizedText, ParentheticalAnnotation,
};
pub use metric::{
    aggregate, bleu, compute_weight, count_matched, evaluate_sentence, BleuConfig, MetricKind,
    TermWeight,
};
pub use scalar::Scalar;
pub use types::{Domain, SentencePair, Split, TermCluster};

/// Version string embedded in every report and manifest.
pub const TOOLKIT_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub type SentenceEvalF64 = metric::SentenceEval<f64>;
pub type SentenceEvalF32 = metric::SentenceEval<f32>;
pub type CorpusReportF64 = metric::CorpusReport<f64>;
pub type CorpusReportF32 = metric::CorpusReport<f32>;
pub type BleuScoreF64 = metric::BleuScore<f64>;
