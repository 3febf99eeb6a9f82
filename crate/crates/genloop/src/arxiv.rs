//! arXiv search for writer context.
//!
//! [`ArxivClient`] talks to the public Atom query API and caches raw
//! responses on disk keyed by the SHA-256 of the query string.
//! [`fetch_arxiv_context`] adds query relaxation and a per-cluster cache.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use ptt_core::annotparse::term_key;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::provider::ArxivConfig;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArxivEntry {
    pub id: String,
    pub title: String,
    pub summary: String,
}

#[derive(Debug, thiserror::Error)]
pub enum ArxivError {
    #[error("arXiv request timed out")]
    Timeout,
    #[error("arXiv unreachable: {0}")]
    Transport(String),
    #[error("arXiv returned HTTP {0}")]
    Status(u16),
    #[error("unreadable Atom feed: {0}")]
    Feed(String),
    #[error("arXiv still failing after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: usize, last: Box<ArxivError> },
    #[error("no arXiv results for any of: {}", .queries.join(" | "))]
    NoResults { queries: Vec<String> },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ArxivError {
    fn is_retryable(&self) -> bool {
        matches!(self, ArxivError::Timeout | ArxivError::Transport(_) | ArxivError::Status(429 | 500..))
    }
}

pub trait ArxivSearch: Sync {
    /// Entries for `query` in the service's relevance order.
    fn search(&self, query: &str) -> Result<Vec<ArxivEntry>, ArxivError>;
}

#[derive(Debug, Deserialize)]
struct Feed {
    #[serde(rename = "entry", default)]
    entries: Vec<FeedEntry>,
}

#[derive(Debug, Deserialize)]
struct FeedEntry {
    #[serde(default)]
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    summary: String,
}

fn squash(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn parse_feed(xml: &str) -> Result<Vec<ArxivEntry>, ArxivError> {
    let feed: Feed = quick_xml::de::from_str(xml).map_err(|e| ArxivError::Feed(e.to_string()))?;
    Ok(feed
        .entries
        .into_iter()
        // The API reports query errors as a single entry titled "Error".
        .filter(|e| !(e.title.trim() == "Error" && e.id.contains("api/errors")))
        .map(|e| ArxivEntry {
            id: e.id.trim().to_owned(),
            title: squash(&e.title),
            summary: squash(&e.summary),
        })
        .collect())
}

pub struct ArxivClient {
    config: ArxivConfig,
    cache_dir: Option<PathBuf>,
    agent: ureq::Agent,
    last_request: Mutex<Option<Instant>>,
    network_calls: AtomicUsize,
}

impl ArxivClient {
    pub fn new(config: ArxivConfig) -> Self {
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
                .http_status_as_error(false)
                .build(),
        );
        ArxivClient {
            cache_dir: config.cache_dir.clone(),
            config,
            agent,
            last_request: Mutex::new(None),
            network_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    /// Requests actually sent over the network so far.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    fn cache_path(&self, query: &str) -> Option<PathBuf> {
        let digest = hex::encode(Sha256::digest(query.as_bytes()));
        self.cache_dir.as_ref().map(|d| d.join("queries").join(format!("{digest}.xml")))
    }

    /// Waits out the configured minimum spacing between requests.
    fn pace(&self) {
        let mut last = self.last_request.lock().unwrap();
        if let Some(t) = *last {
            let gap = Duration::from_millis(self.config.min_interval_ms);
            let elapsed = t.elapsed();
            if elapsed < gap {
                thread::sleep(gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn fetch_once(&self, query: &str) -> Result<String, ArxivError> {
        self.pace();
        self.network_calls.fetch_add(1, Ordering::Relaxed);
        let mut resp = self
            .agent
            .get(&self.config.base_url)
            .query("search_query", query)
            .query("start", "0")
            .query("max_results", self.config.max_results.to_string())
            .query("sortBy", "relevance")
            .query("sortOrder", "descending")
            .call()
            .map_err(transport)?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(ArxivError::Status(status));
        }
        resp.body_mut().read_to_string().map_err(transport)
    }

    fn fetch(&self, query: &str) -> Result<String, ArxivError> {
        let mut delay = Duration::from_millis(self.config.backoff_initial_ms);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.fetch_once(query) {
                Ok(body) => return Ok(body),
                Err(e) if e.is_retryable() && attempt <= self.config.retries => {
                    log::info!("arXiv attempt {attempt} failed ({e}); backing off {delay:?}");
                    thread::sleep(delay);
                    delay *= 2;
                }
                Err(e) if e.is_retryable() => {
                    return Err(ArxivError::RetriesExhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

fn transport(e: ureq::Error) -> ArxivError {
    match e {
        ureq::Error::Timeout(_) => ArxivError::Timeout,
        other => ArxivError::Transport(other.to_string()),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArxivError + '_ {
    move |source| ArxivError::Io {
        path: path.to_owned(),
        source,
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArxivError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

impl ArxivSearch for ArxivClient {
    fn search(&self, query: &str) -> Result<Vec<ArxivEntry>, ArxivError> {
        let cached = self.cache_path(query);
        if let Some(path) = &cached {
            if let Ok(xml) = fs::read_to_string(path) {
                return parse_feed(&xml);
            }
        }
        let xml = self.fetch(query)?;
        let entries = parse_feed(&xml)?;
        if let Some(path) = &cached {
            write_atomic(path, xml.as_bytes())?;
        }
        Ok(entries)
    }
}

/// Full conjunction first, then each pair: `(0,1)`, `(1,2)`, `(0,2)`.
pub fn relaxation_queries(terms: &[String]) -> Vec<String> {
    let clause = |t: &String| format!("all:\"{}\"", t.replace('"', " ").trim());
    let join = |idx: &[usize]| idx.iter().map(|&i| clause(&terms[i])).collect::<Vec<_>>().join(" AND ");
    match terms.len() {
        3 => vec![join(&[0, 1, 2]), join(&[0, 1]), join(&[1, 2]), join(&[0, 2])],
        _ => vec![join(&(0..terms.len()).collect::<Vec<_>>())],
    }
}

/// Context chosen for a cluster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArxivContext {
    pub cluster_id: u64,
    pub terms: Vec<String>,
    /// Query that produced the hits.
    pub query: String,
    pub queries_tried: Vec<String>,
    /// Hits in relevance order, most relevant first.
    pub entries: Vec<ArxivEntry>,
}

impl ArxivContext {
    /// The entry used for pass `pass` (0-based): the most relevant hit that
    /// mentions a cluster term, rotating through hits on later passes.
    pub fn pick(&self, pass: usize) -> &ArxivEntry {
        let keys: Vec<String> = self.terms.iter().map(|t| term_key(t)).collect();
        let mentions = |e: &ArxivEntry| {
            let text = term_key(&e.summary);
            keys.iter().any(|k| text.contains(k.as_str()))
        };
        let mut order: Vec<&ArxivEntry> = self.entries.iter().filter(|e| mentions(e)).collect();
        order.extend(self.entries.iter().filter(|e| !mentions(e)));
        order[pass % order.len()]
    }
}

fn context_path(dir: &Path, cluster_id: u64) -> PathBuf {
    dir.join("clusters").join(format!("cluster-{cluster_id:05}.json"))
}

/// Finds papers for `terms`, relaxing the query on empty results.
///
/// With `cache_dir`, a previous answer for the same cluster and terms is
/// returned without calling `search`.
pub fn fetch_arxiv_context(
    cluster_id: u64,
    terms: &[String],
    search: &dyn ArxivSearch,
    cache_dir: Option<&Path>,
) -> Result<ArxivContext, ArxivError> {
    if let Some(dir) = cache_dir {
        let path = context_path(dir, cluster_id);
        if let Ok(text) = fs::read_to_string(&path) {
            match serde_json::from_str::<ArxivContext>(&text) {
                Ok(ctx) if ctx.terms == terms => return Ok(ctx),
                Ok(_) => log::warn!("{}: terms changed, refetching", path.display()),
                Err(e) => log::warn!("{}: unreadable ({e}), refetching", path.display()),
            }
        }
    }
    let mut tried = Vec::new();
    for query in relaxation_queries(terms) {
        tried.push(query.clone());
        let entries = search.search(&query)?;
        let entries: Vec<ArxivEntry> = entries.into_iter().filter(|e| !e.summary.is_empty()).collect();
        if entries.is_empty() {
            log::debug!("cluster {cluster_id}: no hits for {query}");
            continue;
        }
        let ctx = ArxivContext {
            cluster_id,
            terms: terms.to_vec(),
            query,
            queries_tried: tried,
            entries,
        };
        if let Some(dir) = cache_dir {
            let json = serde_json::to_vec_pretty(&ctx).expect("context serializes");
            write_atomic(&context_path(dir, cluster_id), &json)?;
        }
        return Ok(ctx);
    }
    Err(ArxivError::NoResults { queries: tried })
}
