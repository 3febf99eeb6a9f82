use std::path::Path;

use ptt_core::{Domain, SentencePair, Split, TermCluster};
use serde::{Deserialize, Serialize};
use serde_json::Map;

use crate::agents::{
    cluster_terms, evaluate_translations, executor_route, occurrences, translate_sentences, write_sentences,
    CallLog, Evaluation, Route,
};
use crate::arxiv::{fetch_arxiv_context, ArxivSearch};
use crate::prompts::Revision;
use crate::provider::ChatProvider;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Round {
    pub draft_sentences: Vec<String>,
    pub translations: Vec<String>,
    pub scores: Vec<u8>,
    pub suggestions: Vec<String>,
    pub route: Route,
    pub evaluations: Vec<Evaluation>,
}

impl Round {
    pub fn min_score(&self) -> u8 {
        self.scores.iter().copied().min().unwrap_or(0)
    }

    pub fn locally_clean(&self) -> bool {
        self.evaluations.iter().all(|e| e.local.passed())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptStatus {
    /// Accepted by the executor with every annotation present.
    Completed,
    /// Final pairs come from a best-effort round and need human review.
    Fallback,
    /// Stopped by an error; `final_pairs` is empty.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTranscript {
    pub cluster_id: u64,
    pub domain: Domain,
    pub terms: Vec<String>,
    /// Generation pass, starting at 1.
    pub pass: usize,
    pub arxiv_context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arxiv_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arxiv_query: Option<String>,
    pub rounds: Vec<Round>,
    pub status: TranscriptStatus,
    pub fallback: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
    /// Index into `rounds` of the round the final pairs come from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_round: Option<usize>,
    pub needs_review: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub final_pairs: Vec<SentencePair>,
    pub total_provider_calls: usize,
    pub reprompts: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl AgentTranscript {
    fn empty(cluster: &TermCluster, pass: usize) -> Self {
        AgentTranscript {
            cluster_id: cluster.cluster_id,
            domain: cluster.domain,
            terms: cluster.terms.clone(),
            pass,
            arxiv_context: String::new(),
            arxiv_id: None,
            arxiv_query: None,
            rounds: Vec::new(),
            status: TranscriptStatus::Failed,
            fallback: false,
            fallback_reason: None,
            selected_round: None,
            needs_review: false,
            error: None,
            final_pairs: Vec::new(),
            total_provider_calls: 0,
            reprompts: 0,
            diagnostics: Vec::new(),
        }
    }

    fn fail(mut self, log: &CallLog, error: String) -> Self {
        log::warn!("cluster {} pass {}: {error}", self.cluster_id, self.pass);
        self.record(log);
        self.status = TranscriptStatus::Failed;
        self.error = Some(error);
        self
    }

    fn record(&mut self, log: &CallLog) {
        self.total_provider_calls = log.calls;
        self.reprompts = log.reprompts;
        self.diagnostics = log.diagnostics.clone();
    }

    pub fn is_done(&self) -> bool {
        self.status != TranscriptStatus::Failed
    }

    /// Every recorded route agrees with the executor rule applied to its scores.
    pub fn routes_replay(&self) -> bool {
        self.rounds.iter().all(|r| executor_route(&r.scores) == r.route)
    }
}

#[derive(Debug, Clone)]
pub struct PipelineSettings<'a> {
    pub max_rounds: usize,
    /// Per-cluster arXiv context cache.
    pub context_cache: Option<&'a Path>,
    pub pass: usize,
}

impl Default for PipelineSettings<'_> {
    fn default() -> Self {
        PipelineSettings {
            max_rounds: 3,
            context_cache: None,
            pass: 1,
        }
    }
}

/// Turns the accepted round into seven pairs carrying the cluster terms each
/// English sentence contains, repeats included.
fn final_pairs(cluster: &TermCluster, terms: &[String; 3], round: &Round, pass: usize) -> Vec<SentencePair> {
    round
        .draft_sentences
        .iter()
        .zip(&round.translations)
        .enumerate()
        .map(|(i, (en, ko))| {
            let mut pair_terms = Vec::new();
            for t in terms {
                pair_terms.extend(std::iter::repeat_n(t.clone(), occurrences(en, t)));
            }
            SentencePair {
                id: format!("{}-{:04}-p{pass}-s{}", cluster.domain, cluster.cluster_id, i + 1),
                cluster_id: cluster.cluster_id,
                domain: cluster.domain,
                split: Split::Unsplit,
                source: en.clone(),
                target: ko.clone(),
                terms: pair_terms,
                extra: Map::new(),
            }
        })
        .collect()
}

/// Context, writing, then translate/evaluate/route rounds until accepted or
/// `max_rounds` is reached. Errors end up in the transcript, never lost.
pub fn run_cluster(
    cluster: &TermCluster,
    provider: &dyn ChatProvider,
    arxiv: &dyn ArxivSearch,
    settings: &PipelineSettings<'_>,
) -> AgentTranscript {
    let mut t = AgentTranscript::empty(cluster, settings.pass);
    let mut log = CallLog::default();
    let terms = match cluster_terms(cluster) {
        Ok(terms) => terms,
        Err(e) => return t.fail(&log, e),
    };
    let context = match fetch_arxiv_context(cluster.cluster_id, &cluster.terms, arxiv, settings.context_cache) {
        Ok(c) => c,
        Err(e) => return t.fail(&log, format!("arxiv: {e}")),
    };
    let entry = context.pick(settings.pass.saturating_sub(1));
    t.arxiv_context = entry.summary.clone();
    t.arxiv_id = Some(entry.id.clone());
    t.arxiv_query = Some(context.query.clone());

    let english = match write_sentences(&terms, &t.arxiv_context, provider, &mut log) {
        Ok(s) => s,
        Err(e) => return t.fail(&log, format!("writer: {e}")),
    };

    for _ in 0..settings.max_rounds.max(1) {
        let revisions: Option<Vec<Revision<'_>>> = t.rounds.last().map(|prev| {
            prev.translations
                .iter()
                .zip(&prev.evaluations)
                .map(|(k, e)| Revision {
                    previous: k,
                    score: e.score,
                    suggestions: &e.suggestions,
                })
                .collect()
        });
        let korean = match translate_sentences(&terms, &english, revisions.as_deref(), provider, &mut log) {
            Ok(k) => k,
            Err(e) => return t.fail(&log, format!("translator: {e}")),
        };
        let pairs: Vec<(String, String)> = english.iter().cloned().zip(korean.iter().cloned()).collect();
        let evaluations = match evaluate_translations(&terms, &pairs, provider, &mut log) {
            Ok(e) => e,
            Err(e) => return t.fail(&log, format!("evaluator: {e}")),
        };
        let scores: Vec<u8> = evaluations.iter().map(|e| e.score).collect();
        let route = executor_route(&scores);
        t.rounds.push(Round {
            draft_sentences: english.clone(),
            translations: korean,
            suggestions: evaluations.iter().map(|e| e.suggestions.clone()).collect(),
            scores,
            route,
            evaluations,
        });
        if route == Route::FinalOutput {
            break;
        }
    }

    let last = t.rounds.len() - 1;
    let (selected, reason) = if t.rounds[last].route == Route::FinalOutput {
        let reason = (!t.rounds[last].locally_clean())
            .then(|| "accepted round has terms without parentheticals".to_owned());
        (last, reason)
    } else {
        // Highest minimum score; later rounds win ties.
        let best = (0..t.rounds.len())
            .max_by_key(|&i| (t.rounds[i].min_score(), i))
            .unwrap();
        (best, Some(format!("max_rounds ({}) reached without acceptance", settings.max_rounds)))
    };
    t.final_pairs = final_pairs(cluster, &terms, &t.rounds[selected], settings.pass);
    t.selected_round = Some(selected);
    t.fallback = reason.is_some();
    t.needs_review = t.fallback || t.rounds[selected].evaluations.iter().any(|e| e.audit_mismatch);
    t.fallback_reason = reason;
    t.status = if t.fallback {
        TranscriptStatus::Fallback
    } else {
        TranscriptStatus::Completed
    };
    t.record(&log);
    t
}
