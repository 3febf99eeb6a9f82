//! Chat-completion provider abstraction and a blocking HTTP implementation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Writer,
    Translator,
    Evaluator,
    Executor,
}

impl AgentRole {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Writer => "writer",
            AgentRole::Translator => "translator",
            AgentRole::Evaluator => "evaluator",
            AgentRole::Executor => "executor",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider request timed out")]
    Timeout,
    #[error("provider unreachable: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: Box<ProviderError> },
    /// Raised by scripted test providers when they run out of responses.
    #[error("scripted provider: {0}")]
    Script(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Timeout | ProviderError::Transport(_) => true,
            ProviderError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A chat-completion backend. `role` selects the model binding.
pub trait ChatProvider: Sync {
    fn complete(&self, role: AgentRole, messages: &[ChatMessage]) -> Result<String, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleSettings {
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
}

impl RoleSettings {
    fn new(model: &str) -> Self {
        RoleSettings {
            model: model.into(),
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArxivConfig {
    pub base_url: String,
    /// Entries requested per query.
    pub max_results: usize,
    /// Minimum spacing between network requests.
    pub min_interval_ms: u64,
    pub timeout_secs: f64,
    pub retries: usize,
    pub backoff_initial_ms: u64,
    /// Response and per-cluster context cache. Defaults to `<out>/cache/arxiv`.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ArxivConfig {
    fn default() -> Self {
        ArxivConfig {
            base_url: "http://export.arxiv.org/api/query".into(),
            max_results: 5,
            min_interval_ms: 3000,
            timeout_secs: 30.0,
            retries: 3,
            backoff_initial_ms: 3000,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    /// Full chat-completions URL.
    pub endpoint: String,
    /// Environment variable holding the API key. Unset means no auth header.
    pub api_key_env: String,
    pub writer: RoleSettings,
    pub translator: RoleSettings,
    pub evaluator: RoleSettings,
    /// Recorded for provenance; routing is computed locally.
    pub executor: RoleSettings,
    pub max_rounds: usize,
    pub timeout_secs: f64,
    pub retries: usize,
    pub backoff_initial_ms: u64,
    /// Clusters processed concurrently.
    pub parallelism: usize,
    pub arxiv: ArxivConfig,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            writer: RoleSettings::new("gpt-4o-mini"),
            translator: RoleSettings::new("gpt-4-turbo"),
            evaluator: RoleSettings::new("gpt-4o-mini"),
            executor: RoleSettings::new("gpt-4o-mini"),
            max_rounds: 3,
            timeout_secs: 120.0,
            retries: 3,
            backoff_initial_ms: 1000,
            parallelism: 4,
            arxiv: ArxivConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("invalid provider config: {0}")]
    Invalid(String),
}

impl ProviderConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ProviderConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_rounds == 0 {
            return Err(ConfigError::Invalid("max_rounds must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        for (role, s) in self.roles() {
            if !(0.0..=2.0).contains(&s.temperature) {
                return Err(ConfigError::Invalid(format!("{role}.temperature must be in [0, 2]")));
            }
        }
        Ok(())
    }

    pub fn role(&self, role: AgentRole) -> &RoleSettings {
        match role {
            AgentRole::Writer => &self.writer,
            AgentRole::Translator => &self.translator,
            AgentRole::Evaluator => &self.evaluator,
            AgentRole::Executor => &self.executor,
        }
    }

    pub fn roles(&self) -> [(AgentRole, &RoleSettings); 4] {
        [
            (AgentRole::Writer, &self.writer),
            (AgentRole::Translator, &self.translator),
            (AgentRole::Evaluator, &self.evaluator),
            (AgentRole::Executor, &self.executor),
        ]
    }
}

/// OpenAI-style `POST {model, messages, temperature}` client.
pub struct HttpChatProvider {
    config: ProviderConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatProvider {
    /// Reads the API key from the configured environment variable.
    pub fn new(config: ProviderConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: ProviderConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
                .http_status_as_error(false)
                .build(),
        );
        HttpChatProvider { config, api_key, agent }
    }

    /// One request. On failure also returns the server's `Retry-After` seconds.
    fn post_once(&self, body: &Value) -> Result<String, (ProviderError, Option<u64>)> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (transport(e), None))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok());
        let text = resp.body_mut().read_to_string().map_err(|e| (transport(e), None))?;
        if status != 200 {
            return Err((ProviderError::Status { status, body: text }, retry_after));
        }
        Ok(text)
    }
}

fn transport(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout,
        ureq::Error::Io(ref io) if io.kind() == std::io::ErrorKind::TimedOut => ProviderError::Timeout,
        other => ProviderError::Transport(other.to_string()),
    }
}

/// Extracts `choices[0].message.content`.
pub fn parse_completion(body: &str) -> Result<String, ProviderError> {
    let v: Value = serde_json::from_str(body).map_err(|e| ProviderError::Malformed(format!("not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, role: AgentRole, messages: &[ChatMessage]) -> Result<String, ProviderError> {
        let settings = self.config.role(role);
        let body = json!({
            "model": settings.model,
            "messages": messages,
            "temperature": settings.temperature,
        });
        let mut delay = Duration::from_millis(self.config.backoff_initial_ms);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let (err, retry_after) = match self.post_once(&body) {
                Ok(text) => return parse_completion(&text),
                Err(e) => e,
            };
            if !err.is_retryable() {
                return Err(err);
            }
            if attempt > self.config.retries {
                return Err(ProviderError::RetriesExhausted {
                    attempts: attempt,
                    last: Box::new(err),
                });
            }
            let wait = delay.max(Duration::from_secs(retry_after.unwrap_or(0)));
            log::debug!("{role} call attempt {attempt} failed ({err}); retrying in {wait:?}");
            thread::sleep(wait);
            delay *= 2;
        }
    }
}
