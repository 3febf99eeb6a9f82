//! Offline stand-ins for the chat provider and arXiv, for tests and dry runs.
//!
//! [`ScriptedProvider`] replays fixed replies per role. [`SyntheticProvider`]
//! answers any prompt from this crate with well-formed, deterministic output
//! derived from the prompt itself.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{LazyLock, Mutex};

use ptt_core::annotparse::term_key;
use regex::Regex;
use sha2::{Digest, Sha256};

use crate::agents::{local_check, occurrences, REQUIRED_TERMS};
use crate::arxiv::{ArxivEntry, ArxivError, ArxivSearch};
use crate::parse::parse_items;
use crate::prompts::INPUT_HEADER;
use crate::provider::{AgentRole, ChatMessage, ChatProvider, ProviderError};

type Reply = Result<String, ProviderError>;

/// Replays queued replies per role and records every request.
#[derive(Default)]
pub struct ScriptedProvider {
    queues: Mutex<HashMap<AgentRole, VecDeque<Reply>>>,
    log: Mutex<Vec<(AgentRole, Vec<ChatMessage>)>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, role: AgentRole, reply: impl Into<String>) -> &Self {
        self.queues.lock().unwrap().entry(role).or_default().push_back(Ok(reply.into()));
        self
    }

    pub fn push_err(&self, role: AgentRole, err: ProviderError) -> &Self {
        self.queues.lock().unwrap().entry(role).or_default().push_back(Err(err));
        self
    }

    pub fn requests(&self) -> Vec<(AgentRole, Vec<ChatMessage>)> {
        self.log.lock().unwrap().clone()
    }

    pub fn roles_called(&self) -> Vec<AgentRole> {
        self.log.lock().unwrap().iter().map(|(r, _)| *r).collect()
    }

    pub fn remaining(&self) -> usize {
        self.queues.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, role: AgentRole, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        self.log.lock().unwrap().push((role, messages.to_vec()));
        self.queues
            .lock()
            .unwrap()
            .get_mut(&role)
            .and_then(VecDeque::pop_front)
            .unwrap_or_else(|| Err(ProviderError::Script(format!("no scripted reply left for {role}"))))
    }
}

/// Writer reply using each required term once, tagged with `tag` so that
/// different contexts give different sentences.
pub fn writer_reply(terms: &[String; 3], tag: &str) -> String {
    REQUIRED_TERMS
        .iter()
        .enumerate()
        .map(|(i, need)| {
            let used: Vec<&str> = need.iter().map(|&t| terms[t].as_str()).collect();
            format!(
                "{}.english: Building on study {tag}, sentence {} relates {} within one argument.",
                i + 1,
                i + 1,
                used.join(" and ")
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Deterministic Hangul syllables standing in for a translation of `s`.
fn hangul_digest(s: &str) -> String {
    Sha256::digest(s.as_bytes())
        .chunks(2)
        .take(4)
        .map(|b| char::from_u32(0xAC00 + (u32::from(b[0]) << 8 | u32::from(b[1])) % 11172).unwrap())
        .collect()
}

/// Korean stand-in for `english`: a digest followed by `용어(term)` for each
/// term occurrence. With `drop_last`, the final annotation is left out.
pub fn korean_for(english: &str, terms: &[String; 3], drop_last: bool) -> String {
    let folded = term_key(english);
    let mut found: Vec<(usize, &String)> = Vec::new();
    for t in terms {
        let key = term_key(t);
        found.extend(folded.match_indices(key.as_str()).map(|(at, _)| (at, t)));
    }
    found.sort();
    let n = found.len();
    let parts: Vec<String> = found
        .iter()
        .enumerate()
        .map(|(i, (_, t))| {
            if drop_last && i + 1 == n {
                "용어".to_owned()
            } else {
                format!("용어({t})")
            }
        })
        .collect();
    format!("{} 문장은 {}를 다룹니다.", hangul_digest(english), parts.join(", "))
}

pub fn translator_reply(terms: &[String; 3], english: &[String], drop_last: bool) -> String {
    english
        .iter()
        .enumerate()
        .map(|(i, en)| format!("{}.korean: {}", i + 1, korean_for(en, terms, drop_last)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One evaluator block per pair; `scores[i]` overrides the computed score.
pub fn evaluator_reply(terms: &[String; 3], pairs: &[(String, String)], scores: Option<&[u8]>) -> String {
    let mut out = String::new();
    for (i, (en, ko)) in pairs.iter().enumerate() {
        let check = local_check(terms, en, ko);
        let score = scores.map_or(if check.passed() { 10 } else { 5 }, |s| s[i]);
        let verdicts: Vec<String> = terms
            .iter()
            .map(|t| {
                let ok = occurrences(en, t) > 0 && !check.missing.contains(t);
                format!("{t}: {}", if ok { "Yes" } else { "No" })
            })
            .collect();
        let suggestions = if check.passed() {
            "No improvements needed".to_owned()
        } else {
            format!("Enclose {} in parentheses.", check.missing.join(", "))
        };
        out.push_str(&format!(
            "{}.\nenglish: {en}\nkorean: {ko}\nscore: {score}/10\nterms_check: [{}]\nparentheses_count: {}\nsuggestions: {suggestions}\n",
            i + 1,
            verdicts.join(", "),
            check.required.len() - check.missing.len(),
        ));
    }
    out
}

static TERM_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^\[TERM([123])\] = (.*)$").unwrap());
static CHECK_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^terms_check: \[(.*): Yes/No, (.*): Yes/No, (.*): Yes/No\]$").unwrap());
static REFERENCE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?s)<reference>\n(.*?)\n</reference>").unwrap());

fn prompt_terms(prompt: &str) -> Option<[String; 3]> {
    let mut terms: [String; 3] = Default::default();
    let mut seen = 0;
    for c in TERM_LINE.captures_iter(prompt) {
        let i: usize = c[1].parse().ok()?;
        terms[i - 1] = c[2].trim().to_owned();
        seen += 1;
    }
    if seen == 3 {
        return Some(terms);
    }
    let c = CHECK_LINE.captures(prompt)?;
    Some([c[1].to_owned(), c[2].to_owned(), c[3].to_owned()])
}

fn input_section(prompt: &str) -> &str {
    let start = prompt.find(INPUT_HEADER).map_or(prompt.len(), |i| i + INPUT_HEADER.len());
    let rest = &prompt[start..];
    rest.find("\n## ").map_or(rest, |end| &rest[..end])
}

/// Answers prompts built by this crate without any network access.
///
/// With `flaky_translator`, first-round translations leave out one
/// parenthetical per sentence, so every cluster needs one revision.
#[derive(Default)]
pub struct SyntheticProvider {
    pub flaky_translator: bool,
    calls: AtomicUsize,
}

impl SyntheticProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn flaky() -> Self {
        SyntheticProvider {
            flaky_translator: true,
            ..Self::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    /// Reply to a rendered prompt, or `None` if it is not recognised.
    pub fn reply_to(&self, role: AgentRole, prompt: &str) -> Option<String> {
        let terms = prompt_terms(prompt)?;
        match role {
            AgentRole::Writer => {
                let context = REFERENCE.captures(prompt).map(|c| c[1].to_owned()).unwrap_or_default();
                let tag = hex::encode(&Sha256::digest(context.as_bytes())[..4]);
                Some(writer_reply(&terms, &tag))
            }
            AgentRole::Translator => {
                let english: Vec<String> = parse_items(input_section(prompt))
                    .iter()
                    .filter_map(|it| it.text("english").map(str::to_owned))
                    .collect();
                let revision = prompt.contains("## Previous translation");
                Some(translator_reply(&terms, &english, self.flaky_translator && !revision))
            }
            AgentRole::Evaluator => {
                let pairs: Vec<(String, String)> = parse_items(input_section(prompt))
                    .iter()
                    .filter_map(|it| Some((it.field("english")?.to_owned(), it.field("korean")?.to_owned())))
                    .collect();
                Some(evaluator_reply(&terms, &pairs, None))
            }
            AgentRole::Executor => None,
        }
    }
}

impl ChatProvider for SyntheticProvider {
    fn complete(&self, role: AgentRole, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let prompt = messages.first().map(|m| m.content.as_str()).unwrap_or("");
        self.reply_to(role, prompt)
            .ok_or_else(|| ProviderError::Script(format!("unrecognised {role} prompt")))
    }
}

type Responder = Box<dyn Fn(&str) -> Vec<ArxivEntry> + Send + Sync>;

/// arXiv stand-in answering from a closure and recording queries.
pub struct StaticArxiv {
    respond: Responder,
    queries: Mutex<Vec<String>>,
}

impl StaticArxiv {
    pub fn new(respond: impl Fn(&str) -> Vec<ArxivEntry> + Send + Sync + 'static) -> Self {
        StaticArxiv {
            respond: Box::new(respond),
            queries: Mutex::new(Vec::new()),
        }
    }

    /// Two hits for every query, each quoting the query.
    pub fn echo() -> Self {
        Self::new(|q| {
            ["first", "second"]
                .iter()
                .map(|rank| ArxivEntry {
                    id: format!("mock:{rank}:{q}"),
                    title: format!("{rank} paper"),
                    summary: format!("The {rank} abstract discusses {q}."),
                })
                .collect()
        })
    }

    pub fn empty() -> Self {
        Self::new(|_| Vec::new())
    }

    pub fn queries(&self) -> Vec<String> {
        self.queries.lock().unwrap().clone()
    }
}

impl ArxivSearch for StaticArxiv {
    fn search(&self, query: &str) -> Result<Vec<ArxivEntry>, ArxivError> {
        self.queries.lock().unwrap().push(query.to_owned());
        Ok((self.respond)(query))
    }
}
