//! Client for the neural-metric sidecar.
//!
//! Wire protocol, JSON over HTTP:
//!
//! * `POST /v1/score`: [`ScoreRequest`] in, [`ScoreResponse`] out. Scores are
//!   aligned index-for-index with the request items and `request_id` is echoed.
//! * `GET /v1/health`: [`HealthStatus`].
//!
//! Scores are passed through on the model's native scale.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuralMetric {
    Comet,
    Bertscore,
}

impl fmt::Display for NeuralMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NeuralMetric::Comet => "comet",
            NeuralMetric::Bertscore => "bertscore",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreItem {
    pub src: String,
    pub hyp: String,
    #[serde(rename = "ref")]
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub metric_kind: NeuralMetric,
    pub items: Vec<ScoreItem>,
    pub request_id: String,
}

impl ScoreRequest {
    pub fn validate(&self, max_batch: usize) -> Result<(), ScorerError> {
        if self.items.is_empty() {
            return Err(ScorerError::InvalidRequest("items must be non-empty".into()));
        }
        if self.items.len() > max_batch {
            return Err(ScorerError::InvalidRequest(format!(
                "batch of {} items exceeds the limit of {max_batch}",
                self.items.len()
            )));
        }
        if self.metric_kind == NeuralMetric::Comet {
            if let Some(i) = self.items.iter().position(|it| it.src.trim().is_empty()) {
                return Err(ScorerError::InvalidRequest(format!(
                    "items[{i}].src must be non-empty for comet"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub request_id: String,
    pub scores: Vec<f64>,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthStatus {
    pub status: String,
    #[serde(default)]
    pub model_ids: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredItems {
    pub scores: Vec<f64>,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer request timed out")]
    Timeout,
    #[error("scorer unreachable: {0}")]
    Transport(String),
    #[error("scorer returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("scorer protocol error in `{field}`: {message}")]
    Protocol { field: String, message: String },
    #[error("invalid score request: {0}")]
    InvalidRequest(String),
    #[error("scorer failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: Box<ScorerError> },
}

impl ScorerError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ScorerError::Timeout | ScorerError::Transport(_) => true,
            ScorerError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }

    fn protocol(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScorerError::Protocol {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Anything that can score (src, hyp, ref) triples with a neural metric.
pub trait NeuralScorer: Sync {
    /// Scores aligned with `items`, plus the model identifier that produced them.
    fn score_items(&self, kind: NeuralMetric, items: &[ScoreItem]) -> Result<ScoredItems, ScorerError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerConfig {
    /// Base URL, e.g. `http://127.0.0.1:8765`.
    pub endpoint: String,
    pub timeout_secs: f64,
    pub max_batch: usize,
    pub max_in_flight: usize,
    pub retries: usize,
    pub backoff_initial_ms: u64,
    /// Prefix for generated request ids.
    pub request_prefix: String,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            endpoint: "http://127.0.0.1:8765".into(),
            timeout_secs: 120.0,
            max_batch: 64,
            max_in_flight: 4,
            retries: 3,
            backoff_initial_ms: 250,
            request_prefix: "ptt".into(),
        }
    }
}

pub struct ScorerClient {
    config: ScorerConfig,
    agent: ureq::Agent,
    sequence: AtomicUsize,
}

impl ScorerClient {
    pub fn new(config: ScorerConfig) -> Self {
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
                .http_status_as_error(false)
                .build(),
        );
        ScorerClient {
            config,
            agent,
            sequence: AtomicUsize::new(0),
        }
    }

    pub fn config(&self) -> &ScorerConfig {
        &self.config
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.endpoint.trim_end_matches('/'), path)
    }

    pub fn health(&self) -> Result<HealthStatus, ScorerError> {
        let mut resp = self.agent.get(&self.url("/v1/health")).call().map_err(transport)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(transport)?;
        if status != 200 {
            return Err(ScorerError::Status { status, body });
        }
        serde_json::from_str(&body).map_err(|e| ScorerError::protocol("health", e.to_string()))
    }

    fn post_once(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let mut resp = self
            .agent
            .post(&self.url("/v1/score"))
            .send_json(req)
            .map_err(transport)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(transport)?;
        if status != 200 {
            return Err(ScorerError::Status { status, body });
        }
        parse_response(&body, req)
    }

    /// Sends one batch, retrying transient failures with exponential backoff.
    pub fn score_batch(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        req.validate(self.config.max_batch)?;
        let mut delay = Duration::from_millis(self.config.backoff_initial_ms);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(req) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retryable() && attempt <= self.config.retries => {
                    log::debug!("scorer attempt {attempt} failed ({e}); retrying in {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                }
                Err(e) if e.is_retryable() => {
                    return Err(ScorerError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn next_request_id(&self, kind: NeuralMetric) -> String {
        let n = self.sequence.fetch_add(1, Ordering::Relaxed);
        format!("{}-{}-{:06}", self.config.request_prefix, kind, n)
    }
}

impl NeuralScorer for ScorerClient {
    /// Splits `items` into batches of at most `max_batch` and keeps up to
    /// `max_in_flight` of them outstanding. Responses are matched back by
    /// request id, so the output order equals the input order.
    fn score_items(&self, kind: NeuralMetric, items: &[ScoreItem]) -> Result<ScoredItems, ScorerError> {
        if items.is_empty() {
            return Ok(ScoredItems {
                scores: Vec::new(),
                model_id: String::new(),
            });
        }
        let requests: Vec<ScoreRequest> = items
            .chunks(self.config.max_batch.max(1))
            .map(|chunk| ScoreRequest {
                metric_kind: kind,
                items: chunk.to_vec(),
                request_id: self.next_request_id(kind),
            })
            .collect();
        let results: Mutex<BTreeMap<String, Result<ScoreResponse, ScorerError>>> =
            Mutex::new(BTreeMap::new());
        let next = AtomicUsize::new(0);
        let workers = self.config.max_in_flight.max(1).min(requests.len());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(req) = requests.get(i) else { break };
                    let out = self.score_batch(req);
                    let failed = out.is_err();
                    results.lock().unwrap().insert(req.request_id.clone(), out);
                    if failed {
                        // Stop handing out work; the whole metric fails anyway.
                        next.store(requests.len(), Ordering::Relaxed);
                    }
                });
            }
        });
        let mut results = results.into_inner().unwrap();
        let mut scores = Vec::with_capacity(items.len());
        let mut model_id: Option<String> = None;
        for req in &requests {
            let resp = results.remove(&req.request_id).unwrap_or_else(|| {
                Err(ScorerError::Transport("batch abandoned after an earlier failure".into()))
            })?;
            match &model_id {
                None => model_id = Some(resp.model_id.clone()),
                Some(m) if *m != resp.model_id => {
                    return Err(ScorerError::protocol(
                        "model_id",
                        format!("changed between batches: `{m}` then `{}`", resp.model_id),
                    ))
                }
                Some(_) => {}
            }
            scores.extend(resp.scores);
        }
        Ok(ScoredItems {
            scores,
            model_id: model_id.unwrap_or_default(),
        })
    }
}

fn transport(e: ureq::Error) -> ScorerError {
    match e {
        ureq::Error::Timeout(_) => ScorerError::Timeout,
        ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut => ScorerError::Timeout,
        other => ScorerError::Transport(other.to_string()),
    }
}

/// Checks a response body against the request it answers.
pub fn parse_response(body: &str, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
    let v: Value = serde_json::from_str(body)
        .map_err(|e| ScorerError::protocol("body", format!("not valid JSON: {e}")))?;
    let request_id = v
        .get("request_id")
        .and_then(Value::as_str)
        .ok_or_else(|| ScorerError::protocol("request_id", "missing or not a string"))?;
    if request_id != req.request_id {
        return Err(ScorerError::protocol(
            "request_id",
            format!("expected `{}`, got `{request_id}`", req.request_id),
        ));
    }
    let model_id = v
        .get("model_id")
        .and_then(Value::as_str)
        .ok_or_else(|| ScorerError::protocol("model_id", "missing or not a string"))?;
    let raw = v
        .get("scores")
        .and_then(Value::as_array)
        .ok_or_else(|| ScorerError::protocol("scores", "missing or not an array"))?;
    if raw.len() != req.items.len() {
        return Err(ScorerError::protocol(
            "scores",
            format!(
                "scores length mismatch: {} scores for {} items",
                raw.len(),
                req.items.len()
            ),
        ));
    }
    let scores = raw
        .iter()
        .enumerate()
        .map(|(i, s)| match s.as_f64() {
            Some(x) if x.is_finite() => Ok(x),
            _ => Err(ScorerError::protocol(
                format!("scores[{i}]"),
                format!("non-finite score {s}"),
            )),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScoreResponse {
        request_id: request_id.to_owned(),
        scores,
        model_id: model_id.to_owned(),
    })
}
