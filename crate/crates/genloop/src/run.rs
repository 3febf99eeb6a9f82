//! Batch generation over a cluster file, with resumable per-cluster transcripts.
//!
//! Output layout under the run directory:
//!
//! ```text
//! transcripts/cluster-00042-p1.json   one per cluster and pass
//! dataset.jsonl (+ dataset.manifest.json)
//! review.jsonl                        transcripts flagged for review
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ptt_core::corpus::{self, hash_bytes, CorpusError, Dataset};
use ptt_core::{SentencePair, TermCluster};
use serde_json::Value;

use crate::arxiv::ArxivSearch;
use crate::combine::combine_sentences;
use crate::pipeline::{run_cluster, AgentTranscript, PipelineSettings, TranscriptStatus};
use crate::provider::ChatProvider;
use crate::review::{self, apply_decisions, review_item, ReviewError, ReviewItem};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Clusters { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Transcript {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Review(#[from] ReviewError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Reads clusters from a JSON array or line-JSON file. Each cluster needs
/// three distinct terms and a unique id.
pub fn load_clusters(path: &Path) -> Result<Vec<TermCluster>, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let bad = |message: String| RunError::Clusters {
        path: path.to_owned(),
        message,
    };
    let clusters: Vec<TermCluster> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| bad(format!("line {}: {e}", i + 1))))
            .collect::<Result<_, _>>()?
    };
    let mut seen = HashSet::new();
    for c in &clusters {
        if !seen.insert(c.cluster_id) {
            return Err(bad(format!("duplicate cluster_id {}", c.cluster_id)));
        }
        crate::agents::cluster_terms(c).map_err(|e| bad(format!("cluster {}: {e}", c.cluster_id)))?;
    }
    Ok(clusters)
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub out_dir: PathBuf,
    pub dataset_name: String,
    /// Generation passes per cluster; pass `p` draws on the `p`-th arXiv hit.
    pub passes: usize,
    pub parallelism: usize,
    pub max_rounds: usize,
    /// Reuse finished transcripts found in `out_dir`.
    pub resume: bool,
    /// Hashed into the manifest's `creation_run_id` (models, settings).
    pub fingerprint: String,
    /// Stored in the dataset manifest as is.
    pub provenance: Option<Value>,
}

impl GenerateOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        GenerateOptions {
            out_dir: out_dir.into(),
            dataset_name: "ptt-generated".into(),
            passes: 1,
            parallelism: 4,
            max_rounds: 3,
            resume: true,
            fingerprint: String::new(),
            provenance: None,
        }
    }

    pub fn transcript_dir(&self) -> PathBuf {
        self.out_dir.join("transcripts")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.out_dir.join("dataset.jsonl")
    }

    pub fn review_path(&self) -> PathBuf {
        self.out_dir.join("review.jsonl")
    }
}

#[derive(Debug)]
pub struct GenerateSummary {
    pub transcripts: Vec<AgentTranscript>,
    pub dataset: Dataset,
    pub review: Vec<ReviewItem>,
    /// Transcripts reused from an earlier run.
    pub resumed: usize,
    /// Provider calls made by this run, excluding resumed transcripts.
    pub fresh_calls: usize,
}

impl GenerateSummary {
    pub fn failed(&self) -> impl Iterator<Item = &AgentTranscript> {
        self.transcripts.iter().filter(|t| t.status == TranscriptStatus::Failed)
    }

    pub fn provider_calls(&self) -> usize {
        self.transcripts.iter().map(|t| t.total_provider_calls).sum()
    }
}

pub fn transcript_path(dir: &Path, cluster_id: u64, pass: usize) -> PathBuf {
    dir.join(format!("cluster-{cluster_id:05}-p{pass}.json"))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), RunError> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn read_transcript(path: &Path) -> Result<AgentTranscript, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| RunError::Transcript {
        path: path.to_owned(),
        source,
    })
}

fn save_transcript(dir: &Path, t: &AgentTranscript) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(t).expect("transcript serializes");
    text.push('\n');
    write_atomic(&transcript_path(dir, t.cluster_id, t.pass), &text)
}

/// Runs every cluster and pass, writing each transcript as soon as it is done,
/// then assembles the dataset and review queue.
pub fn generate(
    clusters: &[TermCluster],
    provider: &dyn ChatProvider,
    arxiv: &dyn ArxivSearch,
    opts: &GenerateOptions,
) -> Result<GenerateSummary, RunError> {
    let tdir = opts.transcript_dir();
    let cache = opts.out_dir.join("arxiv-context");
    fs::create_dir_all(&tdir).map_err(io_err(&tdir))?;

    let jobs: Vec<(usize, usize)> = (1..=opts.passes.max(1))
        .flat_map(|pass| (0..clusters.len()).map(move |c| (c, pass)))
        .collect();
    let slots: Vec<Mutex<Option<AgentTranscript>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let mut resumed = 0;
    if opts.resume {
        for (slot, &(c, pass)) in slots.iter().zip(&jobs) {
            let path = transcript_path(&tdir, clusters[c].cluster_id, pass);
            if path.exists() {
                match read_transcript(&path) {
                    Ok(t) if t.is_done() => {
                        *slot.lock().unwrap() = Some(t);
                        resumed += 1;
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!("ignoring unreadable transcript: {e}"),
                }
            }
        }
    }

    let next = AtomicUsize::new(0);
    let fresh_calls = AtomicUsize::new(0);
    let write_error: Mutex<Option<RunError>> = Mutex::new(None);
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(c, pass)) = jobs.get(i) else { break };
        if slots[i].lock().unwrap().is_some() {
            continue;
        }
        let settings = PipelineSettings {
            max_rounds: opts.max_rounds,
            context_cache: Some(&cache),
            pass,
        };
        let t = run_cluster(&clusters[c], provider, arxiv, &settings);
        log::info!("cluster {} pass {pass}: {:?}", t.cluster_id, t.status);
        fresh_calls.fetch_add(t.total_provider_calls, Ordering::Relaxed);
        if let Err(e) = save_transcript(&tdir, &t) {
            write_error.lock().unwrap().get_or_insert(e);
        }
        *slots[i].lock().unwrap() = Some(t);
    };
    std::thread::scope(|s| {
        for _ in 0..opts.parallelism.clamp(1, jobs.len().max(1)) {
            s.spawn(worker);
        }
    });
    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(e);
    }

    let transcripts: Vec<AgentTranscript> = slots
        .into_iter()
        .map(|s| s.into_inner().unwrap().expect("every job ran"))
        .collect();
    finish(clusters, transcripts, opts, resumed, fresh_calls.into_inner())
}

fn finish(
    clusters: &[TermCluster],
    transcripts: Vec<AgentTranscript>,
    opts: &GenerateOptions,
    resumed: usize,
    fresh_calls: usize,
) -> Result<GenerateSummary, RunError> {
    let mut dataset = assemble(&opts.dataset_name, clusters, &transcripts, &opts.fingerprint);
    dataset.manifest.provenance.clone_from(&opts.provenance);
    corpus::save(&dataset, &opts.dataset_path())?;
    let review: Vec<ReviewItem> = transcripts.iter().filter_map(review_item).collect();
    fs::write(opts.review_path(), review::to_jsonl(&review)).map_err(io_err(&opts.review_path()))?;
    Ok(GenerateSummary {
        transcripts,
        dataset,
        review,
        resumed,
        fresh_calls,
    })
}

/// Composite pairs from every transcript that produced output, ordered by
/// pass, then cluster id. Pairs from transcripts awaiting review carry
/// `"needs_review": true`.
pub fn assemble(name: &str, clusters: &[TermCluster], transcripts: &[AgentTranscript], fingerprint: &str) -> Dataset {
    let mut ordered: Vec<&AgentTranscript> = transcripts.iter().filter(|t| !t.final_pairs.is_empty()).collect();
    ordered.sort_by_key(|t| (t.pass, t.cluster_id));
    let mut pairs: Vec<SentencePair> = Vec::new();
    for t in ordered {
        let prefix = format!("{}-{:04}-{}", t.domain, t.cluster_id, t.pass);
        match combine_sentences(&t.final_pairs, &prefix) {
            Ok(mut combined) => {
                if t.needs_review {
                    for p in &mut combined {
                        p.extra.insert("needs_review".into(), Value::Bool(true));
                    }
                }
                pairs.extend(combined);
            }
            Err(e) => log::warn!("cluster {} pass {}: {e}", t.cluster_id, t.pass),
        }
    }
    let used: HashSet<u64> = pairs.iter().map(|p| p.cluster_id).collect();
    let table: Vec<TermCluster> = clusters.iter().filter(|c| used.contains(&c.cluster_id)).cloned().collect();
    let mut ds = Dataset::new(name, pairs, table);
    let ids: Vec<String> = clusters.iter().map(|c| c.cluster_id.to_string()).collect();
    ds.manifest.creation_run_id = hash_bytes(format!("{fingerprint}\n{}", ids.join(",")).as_bytes());
    ds
}

/// Loads all transcripts from a run directory, sorted by cluster and pass.
pub fn load_transcripts(out_dir: &Path) -> Result<Vec<AgentTranscript>, RunError> {
    let dir = out_dir.join("transcripts");
    let mut out = Vec::new();
    for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
        let path = entry.map_err(io_err(&dir))?.path();
        if path.extension().is_some_and(|e| e == "json") {
            out.push(read_transcript(&path)?);
        }
    }
    out.sort_by_key(|t| (t.cluster_id, t.pass));
    Ok(out)
}

/// Applies decisions from `review.jsonl`, rewrites the touched transcripts and
/// rebuilds the dataset.
pub fn apply_review(clusters: &[TermCluster], opts: &GenerateOptions) -> Result<(usize, GenerateSummary), RunError> {
    let path = opts.review_path();
    let items = review::parse_jsonl(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
    let mut transcripts = load_transcripts(&opts.out_dir)?;
    let changed = apply_decisions(&mut transcripts, &items)?;
    let tdir = opts.transcript_dir();
    for t in &transcripts {
        save_transcript(&tdir, t)?;
    }
    let resumed = transcripts.len();
    Ok((changed, finish(clusters, transcripts, opts, resumed, 0)?))
}
