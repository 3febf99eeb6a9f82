//! Human review of transcripts that ended in fallback or audit disagreement.
//!
//! `review.jsonl` holds one [`ReviewItem`] per flagged transcript. A reviewer
//! fills in `decision` and the edited file is applied with [`apply_decisions`].

use ptt_core::{Domain, SentencePair};
use serde::{Deserialize, Serialize};

use crate::pipeline::{AgentTranscript, TranscriptStatus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ReviewDecision {
    Accept,
    /// Replace the final pairs' targets, in order.
    Edit { targets: Vec<String> },
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub cluster_id: u64,
    pub pass: usize,
    pub domain: Domain,
    pub terms: Vec<String>,
    pub reason: String,
    pub scores: Vec<u8>,
    pub pairs: Vec<SentencePair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<ReviewDecision>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("review.jsonl line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("cluster {cluster_id} pass {pass}: {message}")]
    Mismatch { cluster_id: u64, pass: usize, message: String },
}

pub fn review_item(t: &AgentTranscript) -> Option<ReviewItem> {
    if !t.needs_review {
        return None;
    }
    let reason = t
        .fallback_reason
        .clone()
        .unwrap_or_else(|| "evaluator terms_check disagrees with the local check".to_owned());
    let scores = t.selected_round.and_then(|i| t.rounds.get(i)).map(|r| r.scores.clone()).unwrap_or_default();
    Some(ReviewItem {
        cluster_id: t.cluster_id,
        pass: t.pass,
        domain: t.domain,
        terms: t.terms.clone(),
        reason,
        scores,
        pairs: t.final_pairs.clone(),
        decision: None,
    })
}

pub fn to_jsonl(items: &[ReviewItem]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("review item serializes") + "\n").collect()
}

pub fn parse_jsonl(text: &str) -> Result<Vec<ReviewItem>, ReviewError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| ReviewError::Parse { line: i + 1, source }))
        .collect()
}

/// Applies decided items to matching transcripts. Returns how many changed.
/// Undecided items are left alone.
pub fn apply_decisions(transcripts: &mut [AgentTranscript], items: &[ReviewItem]) -> Result<usize, ReviewError> {
    let mut changed = 0;
    for item in items {
        let Some(decision) = &item.decision else { continue };
        let mismatch = |message: String| ReviewError::Mismatch {
            cluster_id: item.cluster_id,
            pass: item.pass,
            message,
        };
        let t = transcripts
            .iter_mut()
            .find(|t| t.cluster_id == item.cluster_id && t.pass == item.pass)
            .ok_or_else(|| mismatch("no such transcript".into()))?;
        match decision {
            ReviewDecision::Accept => t.status = TranscriptStatus::Completed,
            ReviewDecision::Edit { targets } => {
                if targets.len() != t.final_pairs.len() {
                    return Err(mismatch(format!(
                        "edit has {} targets for {} pairs",
                        targets.len(),
                        t.final_pairs.len()
                    )));
                }
                for (p, target) in t.final_pairs.iter_mut().zip(targets) {
                    p.target.clone_from(target);
                }
                t.status = TranscriptStatus::Completed;
            }
            ReviewDecision::Reject => {
                t.final_pairs.clear();
                t.status = TranscriptStatus::Failed;
                t.error = Some("rejected in review".into());
            }
        }
        t.needs_review = false;
        t.diagnostics.push(format!("review: {}", serde_json::to_string(decision).unwrap()));
        changed += 1;
    }
    Ok(changed)
}
