//! Line-JSON dataset storage, validation and cluster-disjoint splitting.
//!
//! A dataset is a `.jsonl` file with one [`SentencePair`] per line, keys in the
//! order `id, cluster_id, domain, split, source, target, terms` followed by
//! any extra keys the record carried. Next to it lives a manifest
//! (`<stem>.manifest.json`) holding the cluster table, per-split and
//! per-domain counts and the SHA-256 of the `.jsonl` bytes.
//!
//! # Split determinism
//!
//! [`split`] sorts cluster ids ascending and shuffles them with a
//! Fisher–Yates pass driven by ChaCha8 seeded via `seed_from_u64(seed)`:
//! for `i` from `len - 1` down to `1`, draw `x = next_u64()` and swap
//! position `i` with `j = (x as u128 * (i + 1) as u128) >> 64`. Clusters are
//! then assigned, in shuffled order, to whichever split is furthest below its
//! target (ties: train, valid, test). Targets are the fractions of the pair
//! count rounded by largest remainder.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::annotparse::{extract_annotations, normalize, term_key};
use crate::metric::count_matched;
use crate::types::{Domain, SentencePair, Split, TermCluster};

const KNOWN_FIELDS: [&str; 7] = ["id", "cluster_id", "domain", "split", "source", "target", "terms"];

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {message}")]
    Record {
        line: usize,
        field: String,
        message: String,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions([f64; 3]),
    #[error("dataset is already split; request a resplit explicitly")]
    AlreadySplit,
    #[error(
        "cluster {cluster_id} has {size} pairs but the {split} split targets only {target}; \
         raise the {split} fraction or set it to zero"
    )]
    ClusterTooLarge {
        cluster_id: u64,
        size: usize,
        split: Split,
        target: usize,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_owned(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Counts {
    pub total: usize,
    pub by_split: BTreeMap<Split, usize>,
    pub by_domain: BTreeMap<Domain, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub version: String,
    pub creation_run_id: String,
    pub toolkit: String,
    pub counts: Counts,
    /// `sha256:<hex>` of the data file.
    pub content_hash: String,
    pub clusters: Vec<TermCluster>,
    /// Settings of the command that wrote the file, if it recorded any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub pairs: Vec<SentencePair>,
    pub clusters: BTreeMap<u64, TermCluster>,
    pub manifest: Manifest,
    /// Hash of the data file as read, when the dataset came from disk.
    pub loaded_hash: Option<String>,
}

impl Dataset {
    pub fn new(name: &str, pairs: Vec<SentencePair>, clusters: Vec<TermCluster>) -> Self {
        let clusters = clusters.into_iter().map(|c| (c.cluster_id, c)).collect();
        let mut ds = Dataset {
            pairs,
            clusters,
            manifest: Manifest {
                name: name.to_owned(),
                version: "1".into(),
                creation_run_id: String::new(),
                toolkit: crate::TOOLKIT_VERSION.into(),
                counts: Counts::default(),
                content_hash: String::new(),
                clusters: Vec::new(),
                provenance: None,
            },
            loaded_hash: None,
        };
        ds.refresh_manifest();
        ds
    }

    pub fn counts(&self) -> Counts {
        let mut c = Counts {
            total: self.pairs.len(),
            ..Counts::default()
        };
        for p in &self.pairs {
            *c.by_split.entry(p.split).or_default() += 1;
            *c.by_domain.entry(p.domain).or_default() += 1;
        }
        c
    }

    /// Serialized data file contents.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            out.push_str(&record_line(p));
            out.push('\n');
        }
        out
    }

    /// SHA-256 of [`Dataset::to_jsonl`].
    pub fn content_hash(&self) -> String {
        hash_bytes(self.to_jsonl().as_bytes())
    }

    pub fn refresh_manifest(&mut self) {
        self.manifest.counts = self.counts();
        self.manifest.content_hash = self.content_hash();
        self.manifest.clusters = self.clusters.values().cloned().collect();
    }

    pub fn pairs_in(&self, split: Split) -> impl Iterator<Item = &SentencePair> {
        self.pairs.iter().filter(move |p| p.split == split)
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

fn record_line(p: &SentencePair) -> String {
    let mut m = Map::new();
    m.insert("id".into(), Value::from(p.id.clone()));
    m.insert("cluster_id".into(), Value::from(p.cluster_id));
    m.insert("domain".into(), Value::from(p.domain.as_str()));
    m.insert("split".into(), Value::from(p.split.as_str()));
    m.insert("source".into(), Value::from(p.source.clone()));
    m.insert("target".into(), Value::from(p.target.clone()));
    m.insert("terms".into(), Value::from(p.terms.clone()));
    for (k, v) in &p.extra {
        m.insert(k.clone(), v.clone());
    }
    serde_json::to_string(&Value::Object(m)).expect("record serializes")
}

/// Manifest path for a data file: `data.jsonl` -> `data.manifest.json`.
pub fn manifest_path(data: &Path) -> PathBuf {
    let stem = data.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    data.with_file_name(format!("{stem}.manifest.json"))
}

fn field_err(line: usize, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Record {
        line,
        field: field.to_owned(),
        message: message.into(),
    }
}

fn parse_record(line_no: usize, line: &str) -> Result<SentencePair, CorpusError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| field_err(line_no, "<record>", e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(field_err(line_no, "<record>", "expected a JSON object"));
    };
    let take_str = |obj: &mut Map<String, Value>, key: &str| -> Result<String, CorpusError> {
        match obj.shift_remove(key) {
            Some(Value::String(s)) => Ok(s),
            Some(other) => Err(field_err(line_no, key, format!("expected a string, got {other}"))),
            None => Err(field_err(line_no, key, "missing")),
        }
    };
    let id = take_str(&mut obj, "id")?;
    let cluster_id = match obj.shift_remove("cluster_id") {
        Some(v) => v
            .as_u64()
            .ok_or_else(|| field_err(line_no, "cluster_id", format!("expected a non-negative integer, got {v}")))?,
        None => return Err(field_err(line_no, "cluster_id", "missing")),
    };
    let domain: Domain = take_str(&mut obj, "domain")?
        .parse()
        .map_err(|e: String| field_err(line_no, "domain", e))?;
    let split: Split = take_str(&mut obj, "split")?
        .parse()
        .map_err(|e: String| field_err(line_no, "split", e))?;
    let source = take_str(&mut obj, "source")?;
    let target = take_str(&mut obj, "target")?;
    let terms = match obj.shift_remove("terms") {
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, t)| match t {
                Value::String(s) => Ok(s),
                other => Err(field_err(line_no, &format!("terms[{i}]"), format!("expected a string, got {other}"))),
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(other) => return Err(field_err(line_no, "terms", format!("expected an array, got {other}"))),
        None => return Err(field_err(line_no, "terms", "missing")),
    };
    debug_assert!(KNOWN_FIELDS.iter().all(|k| !obj.contains_key(*k)));
    Ok(SentencePair {
        id,
        cluster_id,
        domain,
        split,
        source,
        target,
        terms,
        extra: obj,
    })
}

/// Parses data-file contents. Blank lines are skipped; line numbers are 1-based.
pub fn parse_jsonl(text: &str) -> Result<Vec<SentencePair>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_record(i + 1, l))
        .collect()
}

fn derive_clusters(pairs: &[SentencePair]) -> BTreeMap<u64, TermCluster> {
    let mut clusters: BTreeMap<u64, TermCluster> = BTreeMap::new();
    for p in pairs {
        let c = clusters.entry(p.cluster_id).or_insert_with(|| TermCluster {
            cluster_id: p.cluster_id,
            domain: p.domain,
            terms: Vec::new(),
        });
        for t in &p.terms {
            if !c.terms.iter().any(|x| term_key(x) == term_key(t)) {
                c.terms.push(t.clone());
            }
        }
    }
    clusters
}

/// Loads a data file and its manifest. Without a manifest the cluster table is
/// rebuilt from the pairs.
pub fn load(path: &Path) -> Result<Dataset, CorpusError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8(bytes.clone()).map_err(|e| CorpusError::Io {
        path: path.to_owned(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })?;
    let pairs = parse_jsonl(&text)?;
    let mpath = manifest_path(path);
    let (manifest, clusters) = if mpath.exists() {
        let raw = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
        let manifest: Manifest = serde_json::from_str(&raw).map_err(|e| CorpusError::Manifest {
            path: mpath.clone(),
            message: e.to_string(),
        })?;
        let clusters = manifest
            .clusters
            .iter()
            .map(|c| (c.cluster_id, c.clone()))
            .collect();
        (manifest, clusters)
    } else {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
        let mut ds = Dataset::new(name, Vec::new(), Vec::new());
        ds.pairs = pairs.clone();
        ds.clusters = derive_clusters(&pairs);
        ds.refresh_manifest();
        ds.manifest.content_hash = hash_bytes(&bytes);
        (ds.manifest, ds.clusters)
    };
    Ok(Dataset {
        pairs,
        clusters,
        manifest,
        loaded_hash: Some(hash_bytes(&bytes)),
    })
}

/// Writes the data file and manifest, holding an exclusive lock on the data
/// file while doing so. Counts and hash in the manifest are recomputed.
pub fn save(ds: &Dataset, path: &Path) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut ds = ds.clone();
    ds.refresh_manifest();
    let data = ds.to_jsonl();

    let mut file = OpenOptions::new()
        .write(true)
        .create(true)
        .truncate(false)
        .open(path)
        .map_err(io_err(path))?;
    file.lock().map_err(io_err(path))?;
    file.set_len(0).map_err(io_err(path))?;
    file.write_all(data.as_bytes()).map_err(io_err(path))?;
    file.sync_all().map_err(io_err(path))?;

    let mpath = manifest_path(path);
    let mut manifest = serde_json::to_string_pretty(&ds.manifest).expect("manifest serializes");
    manifest.push('\n');
    let mut mf = File::create(&mpath).map_err(io_err(&mpath))?;
    mf.write_all(manifest.as_bytes()).map_err(io_err(&mpath))?;
    file.unlock().map_err(io_err(path))?;
    Ok(())
}

/// Fractions of pairs for train, valid and test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Self {
        SplitFractions { train, valid, test }
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.valid, self.test]
    }

    fn check(&self) -> Result<(), CorpusError> {
        let a = self.as_array();
        let sum: f64 = a.iter().sum();
        if a.iter().any(|f| !f.is_finite() || *f < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::BadFractions(a));
        }
        Ok(())
    }
}

impl std::str::FromStr for SplitFractions {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<f64> = s
            .split([',', '/'])
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad fraction `{p}`: {e}")))
            .collect::<Result<_, _>>()?;
        match parts.as_slice() {
            [a, b, c] => Ok(SplitFractions::new(*a, *b, *c)),
            _ => Err(format!("expected three fractions train,valid,test, got `{s}`")),
        }
    }
}

const SPLITS: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

/// Integer pair targets per split summing to `total`, by largest remainder.
pub fn split_targets(total: usize, fractions: &SplitFractions) -> [usize; 3] {
    let exact: Vec<f64> = fractions.as_array().iter().map(|f| f * total as f64).collect();
    let mut targets = [0usize; 3];
    for (t, e) in targets.iter_mut().zip(&exact) {
        *t = e.floor() as usize;
    }
    let assigned: usize = targets.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        targets[i] += 1;
    }
    targets
}

/// Seeded Fisher–Yates shuffle, documented in the module docs.
pub fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = ((rng.next_u64() as u128 * (i as u128 + 1)) >> 64) as usize;
        items.swap(i, j);
    }
}

/// Assigns whole clusters to train/valid/test.
///
/// Deterministic for fixed `(ds, fractions, seed)`. Each split ends within
/// one cluster's size of its target. Fails when a cluster is larger than a
/// requested split's target, or when the dataset already carries split tags
/// and `resplit` is false.
pub fn split(
    ds: &Dataset,
    fractions: SplitFractions,
    seed: u64,
    resplit: bool,
) -> Result<Dataset, CorpusError> {
    fractions.check()?;
    if !resplit && ds.pairs.iter().any(|p| p.split != Split::Unsplit) {
        return Err(CorpusError::AlreadySplit);
    }
    let mut sizes: BTreeMap<u64, usize> = BTreeMap::new();
    for p in &ds.pairs {
        *sizes.entry(p.cluster_id).or_default() += 1;
    }
    let targets = split_targets(ds.pairs.len(), &fractions);
    if let Some((&cluster_id, &size)) = sizes.iter().max_by_key(|(&id, &n)| (n, std::cmp::Reverse(id))) {
        for (i, &split) in SPLITS.iter().enumerate() {
            if fractions.as_array()[i] > 0.0 && size > targets[i] {
                return Err(CorpusError::ClusterTooLarge {
                    cluster_id,
                    size,
                    split,
                    target: targets[i],
                });
            }
        }
    }

    let mut order: Vec<u64> = sizes.keys().copied().collect();
    seeded_shuffle(&mut order, seed);
    let mut filled = [0usize; 3];
    let mut assignment: HashMap<u64, Split> = HashMap::new();
    for id in order {
        let deficit = |i: usize| targets[i] as i64 - filled[i] as i64;
        let best = (0..3).fold(0, |best, i| if deficit(i) > deficit(best) { i } else { best });
        filled[best] += sizes[&id];
        assignment.insert(id, SPLITS[best]);
    }

    let mut out = ds.clone();
    for p in &mut out.pairs {
        p.split = assignment[&p.cluster_id];
    }
    out.refresh_manifest();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticKind {
    UnknownCluster { cluster_id: u64 },
    EmptyTerm,
    TermNotInCluster { term: String },
    TermNotInSource { term: String },
    MissingParenthetical { term: String, missing: usize },
    ClusterLeak { cluster_id: u64, splits: Vec<Split> },
    DuplicatePair { first_id: String },
    StaleManifest { recorded: String, actual: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair_id: Option<String>,
    #[serde(flatten)]
    pub kind: DiagnosticKind,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(id) = &self.pair_id {
            write!(f, "[{id}] ")?;
        }
        match &self.kind {
            DiagnosticKind::UnknownCluster { cluster_id } => write!(f, "unknown cluster {cluster_id}"),
            DiagnosticKind::EmptyTerm => write!(f, "empty term"),
            DiagnosticKind::TermNotInCluster { term } => write!(f, "term `{term}` is not in the pair's cluster"),
            DiagnosticKind::TermNotInSource { term } => write!(f, "term `{term}` does not occur in the source"),
            DiagnosticKind::MissingParenthetical { term, missing } => {
                write!(f, "reference lacks {missing} parenthetical(s) for `{term}`")
            }
            DiagnosticKind::ClusterLeak { cluster_id, splits } => {
                let names: Vec<&str> = splits.iter().map(|s| s.as_str()).collect();
                write!(f, "cluster {cluster_id} spans splits {}", names.join(", "))
            }
            DiagnosticKind::DuplicatePair { first_id } => write!(f, "duplicate of pair {first_id}"),
            DiagnosticKind::StaleManifest { recorded, actual } => {
                write!(f, "manifest hash {recorded} does not match data {actual}")
            }
        }
    }
}

/// Checks every dataset invariant. Output order is stable: per-pair findings
/// in pair order, then cluster leakage by cluster id, then duplicates.
pub fn validate(ds: &Dataset) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let at = |p: &SentencePair, kind| Diagnostic {
        pair_id: Some(p.id.clone()),
        kind,
    };

    if let Some(actual) = &ds.loaded_hash {
        if !ds.manifest.content_hash.is_empty() && *actual != ds.manifest.content_hash {
            out.push(Diagnostic {
                pair_id: None,
                kind: DiagnosticKind::StaleManifest {
                    recorded: ds.manifest.content_hash.clone(),
                    actual: actual.clone(),
                },
            });
        }
    }

    for p in &ds.pairs {
        let cluster = ds.clusters.get(&p.cluster_id);
        if cluster.is_none() {
            out.push(at(p, DiagnosticKind::UnknownCluster { cluster_id: p.cluster_id }));
        }
        let source_lower = caseless::default_case_fold_str(&normalize(&p.source).into_string());
        let mut seen: Vec<String> = Vec::new();
        for t in &p.terms {
            let key = term_key(t);
            if key.is_empty() {
                out.push(at(p, DiagnosticKind::EmptyTerm));
                continue;
            }
            if seen.contains(&key) {
                continue;
            }
            seen.push(key.clone());
            if let Some(c) = cluster {
                if !c.terms.iter().any(|ct| term_key(ct) == key) {
                    out.push(at(p, DiagnosticKind::TermNotInCluster { term: t.clone() }));
                }
            }
            if !source_lower.contains(&key) {
                out.push(at(p, DiagnosticKind::TermNotInSource { term: t.clone() }));
            }
        }

        let annotations = extract_annotations(&normalize(&p.target)).annotations;
        for key in &seen {
            let wanted: Vec<&String> = p.terms.iter().filter(|t| term_key(t) == *key).collect();
            let matched = count_matched(&annotations, &wanted);
            if matched < wanted.len() {
                out.push(at(
                    p,
                    DiagnosticKind::MissingParenthetical {
                        term: wanted[0].clone(),
                        missing: wanted.len() - matched,
                    },
                ));
            }
        }
    }

    let mut splits_by_cluster: BTreeMap<u64, Vec<Split>> = BTreeMap::new();
    for p in &ds.pairs {
        let s = splits_by_cluster.entry(p.cluster_id).or_default();
        if !s.contains(&p.split) {
            s.push(p.split);
        }
    }
    for (cluster_id, mut splits) in splits_by_cluster {
        if splits.len() > 1 {
            splits.sort();
            out.push(Diagnostic {
                pair_id: None,
                kind: DiagnosticKind::ClusterLeak { cluster_id, splits },
            });
        }
    }

    let mut first: HashMap<(&str, &str), &str> = HashMap::new();
    let mut reported: HashSet<&str> = HashSet::new();
    for p in &ds.pairs {
        match first.get(&(p.source.as_str(), p.target.as_str())) {
            Some(&first_id) if reported.insert(p.id.as_str()) => out.push(at(
                p,
                DiagnosticKind::DuplicatePair {
                    first_id: first_id.to_owned(),
                },
            )),
            Some(_) => {}
            None => {
                first.insert((&p.source, &p.target), &p.id);
            }
        }
    }
    out
}
