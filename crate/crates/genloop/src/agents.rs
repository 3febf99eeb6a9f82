//! The four agents. Writer, Translator and Evaluator call the provider; the
//! Executor is the score threshold.

use ptt_core::annotparse::{extract_annotations, normalize, term_key};
use ptt_core::metric::count_matched;
use ptt_core::TermCluster;
use serde::{Deserialize, Serialize};

use crate::parse::{numbered_texts, parse_evaluation, EvalBlock};
use crate::prompts::{self, Revision};
use crate::provider::{AgentRole, ChatMessage, ChatProvider, ProviderError};

pub const SENTENCES: usize = 7;

/// Minimum score for a sentence to be accepted.
pub const ACCEPT_SCORE: u8 = 8;

/// Re-prompts allowed after a schema violation, per agent call.
pub const WRITER_REPROMPTS: usize = 2;
pub const TRANSLATOR_REPROMPTS: usize = 2;
pub const EVALUATOR_REPROMPTS: usize = 1;

/// Term indices each of the seven sentences must use.
pub const REQUIRED_TERMS: [&[usize]; SENTENCES] = [&[0], &[1], &[2], &[0, 1], &[1, 2], &[0, 2], &[0, 1, 2]];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{role} output still malformed after {attempts} attempts: {}", .problems.join("; "))]
    Schema {
        role: AgentRole,
        attempts: usize,
        problems: Vec<String>,
        raw: String,
    },
}

/// Provider usage for one cluster.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallLog {
    pub calls: usize,
    pub reprompts: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

/// The cluster's three terms, or why the cluster is unusable.
pub fn cluster_terms(cluster: &TermCluster) -> Result<[String; 3], String> {
    let terms: [String; 3] = cluster
        .terms
        .clone()
        .try_into()
        .map_err(|t: Vec<String>| format!("cluster {} has {} terms, expected 3", cluster.cluster_id, t.len()))?;
    let keys: Vec<String> = terms.iter().map(|t| term_key(t)).collect();
    if keys.iter().any(String::is_empty) {
        return Err(format!("cluster {} has an empty term", cluster.cluster_id));
    }
    if keys[0] == keys[1] || keys[1] == keys[2] || keys[0] == keys[2] {
        return Err(format!("cluster {} terms are not distinct", cluster.cluster_id));
    }
    Ok(terms)
}

/// Non-overlapping occurrences of `term` in `text`, case-folded.
pub fn occurrences(text: &str, term: &str) -> usize {
    let key = term_key(term);
    if key.is_empty() {
        return 0;
    }
    term_key(text).matches(key.as_str()).count()
}

/// Sends `prompt`, re-prompting with the problems reported by `check` up to
/// `reprompts` times.
fn converse<T>(
    provider: &dyn ChatProvider,
    role: AgentRole,
    prompt: String,
    reprompts: usize,
    log: &mut CallLog,
    check: impl Fn(&str) -> Result<T, Vec<String>>,
) -> Result<T, AgentError> {
    let mut messages = vec![ChatMessage::user(prompt)];
    let mut attempt = 0;
    loop {
        attempt += 1;
        log.calls += 1;
        let reply = provider.complete(role, &messages)?;
        match check(&reply) {
            Ok(v) => return Ok(v),
            Err(problems) if attempt > reprompts => {
                return Err(AgentError::Schema {
                    role,
                    attempts: attempt,
                    problems,
                    raw: reply,
                })
            }
            Err(problems) => {
                log::debug!("{role} reply rejected: {problems:?}");
                log.reprompts += 1;
                messages.push(ChatMessage::assistant(reply));
                messages.push(ChatMessage::user(prompts::repair_prompt(&problems)));
            }
        }
    }
}

pub fn write_sentences(
    terms: &[String; 3],
    context: &str,
    provider: &dyn ChatProvider,
    log: &mut CallLog,
) -> Result<Vec<String>, AgentError> {
    let prompt = prompts::writer_prompt(terms, context);
    converse(provider, AgentRole::Writer, prompt, WRITER_REPROMPTS, log, |reply| {
        let sentences = numbered_texts(reply, "english", SENTENCES)?;
        let problems: Vec<String> = sentences
            .iter()
            .zip(REQUIRED_TERMS)
            .enumerate()
            .flat_map(|(i, (s, need))| {
                need.iter()
                    .filter(|&&t| occurrences(s, &terms[t]) == 0)
                    .map(move |&t| format!("sentence {} must use the term \"{}\"", i + 1, terms[t]))
            })
            .collect();
        if problems.is_empty() {
            Ok(sentences)
        } else {
            Err(problems)
        }
    })
}

/// Lowercases the content of every top-level parenthetical.
pub fn lowercase_parentheticals(text: &str) -> String {
    let norm = normalize(text);
    let s = norm.as_str();
    let mut out = String::with_capacity(s.len());
    let mut cursor = 0;
    for a in extract_annotations(&norm).annotations {
        out.push_str(&s[cursor..a.inner_span.start]);
        out.push_str(&s[a.inner_span.clone()].to_lowercase());
        cursor = a.inner_span.end;
    }
    out.push_str(&s[cursor..]);
    out
}

pub fn translate_sentences(
    terms: &[String; 3],
    english: &[String],
    revisions: Option<&[Revision<'_>]>,
    provider: &dyn ChatProvider,
    log: &mut CallLog,
) -> Result<Vec<String>, AgentError> {
    let prompt = prompts::translator_prompt(terms, english, revisions);
    let korean = converse(provider, AgentRole::Translator, prompt, TRANSLATOR_REPROMPTS, log, |reply| {
        numbered_texts(reply, "korean", english.len())
    })?;
    Ok(korean.iter().map(|k| lowercase_parentheticals(k)).collect())
}

/// Annotation check computed locally for one translated sentence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalCheck {
    /// Cluster terms present in the English sentence (with repeats).
    pub required: Vec<String>,
    /// Required terms lacking a matching parenthetical in the translation.
    pub missing: Vec<String>,
}

impl LocalCheck {
    pub fn passed(&self) -> bool {
        self.missing.is_empty()
    }
}

pub fn local_check(terms: &[String; 3], english: &str, korean: &str) -> LocalCheck {
    let annotations = extract_annotations(&normalize(korean)).annotations;
    let mut required = Vec::new();
    let mut missing = Vec::new();
    for t in terms {
        let n = occurrences(english, t);
        if n == 0 {
            continue;
        }
        let wanted = vec![t.clone(); n];
        let found = count_matched(&annotations, &wanted);
        required.extend(wanted);
        missing.extend(std::iter::repeat_n(t.clone(), n - found));
    }
    LocalCheck { required, missing }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub score: u8,
    pub suggestions: String,
    /// The model's own per-term verdicts, as reported.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terms_check: Vec<(String, bool)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parentheses_count: Option<usize>,
    pub local: LocalCheck,
    /// The model's terms_check disagrees with the local check.
    pub audit_mismatch: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

fn audit(terms: &[String; 3], model: &[(String, bool)], local: &LocalCheck) -> bool {
    terms.iter().any(|t| {
        let key = term_key(t);
        let Some(&(_, said_yes)) = model.iter().find(|(m, _)| term_key(m) == key) else {
            return false;
        };
        let required = local.required.iter().any(|r| term_key(r) == key);
        if !required {
            return false;
        }
        let ok = !local.missing.iter().any(|m| term_key(m) == key);
        said_yes != ok
    })
}

fn block_problems(blocks: &std::collections::BTreeMap<usize, EvalBlock>, n: usize) -> Vec<String> {
    (1..=n)
        .filter_map(|i| match blocks.get(&i) {
            None => Some(format!("evaluation for sentence {i} is missing")),
            Some(b) if b.score.is_none() => Some(format!(
                "sentence {i}: score {:?} is not of the form X/10",
                b.raw_score.as_deref().unwrap_or("")
            )),
            Some(_) => None,
        })
        .collect()
}

/// Scores seven translations. A score that cannot be parsed after one
/// re-prompt becomes 0 with a diagnostic, which forces another round.
pub fn evaluate_translations(
    terms: &[String; 3],
    pairs: &[(String, String)],
    provider: &dyn ChatProvider,
    log: &mut CallLog,
) -> Result<Vec<Evaluation>, AgentError> {
    let n = pairs.len();
    let mut messages = vec![ChatMessage::user(prompts::evaluator_prompt(terms, pairs))];
    let mut merged: std::collections::BTreeMap<usize, EvalBlock> = Default::default();
    for attempt in 0..=EVALUATOR_REPROMPTS {
        log.calls += 1;
        let reply = provider.complete(AgentRole::Evaluator, &messages)?;
        for (i, block) in parse_evaluation(&reply) {
            let better = block.score.is_some() || !merged.contains_key(&i);
            if i >= 1 && i <= n && better {
                merged.insert(i, block);
            }
        }
        let problems = block_problems(&merged, n);
        if problems.is_empty() || attempt == EVALUATOR_REPROMPTS {
            break;
        }
        log.reprompts += 1;
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(prompts::repair_prompt(&problems)));
    }

    Ok(pairs
        .iter()
        .enumerate()
        .map(|(i, (en, ko))| {
            let local = local_check(terms, en, ko);
            let block = merged.remove(&(i + 1)).unwrap_or_default();
            let diagnostic = match &block.score {
                Some(_) => None,
                None => {
                    let d = format!(
                        "sentence {}: unparseable score {:?}, scored 0",
                        i + 1,
                        block.raw_score.as_deref().unwrap_or("<missing>")
                    );
                    log.diagnostics.push(d.clone());
                    Some(d)
                }
            };
            Evaluation {
                score: block.score.unwrap_or(0),
                audit_mismatch: audit(terms, &block.terms_check, &local),
                suggestions: block.suggestions,
                terms_check: block.terms_check,
                parentheses_count: block.parentheses_count,
                local,
                diagnostic,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Translator,
    FinalOutput,
}

/// `translator` if any score is below 8, else `final_output`. An empty score
/// list is never accepted.
pub fn executor_route(scores: &[u8]) -> Route {
    match scores.iter().min() {
        Some(&m) if m >= ACCEPT_SCORE => Route::FinalOutput,
        _ => Route::Translator,
    }
}
