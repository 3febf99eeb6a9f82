use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ptt_core::corpus::{self, Dataset};
use ptt_core::metric::{aggregate, evaluate_corpus, EvalOptions};
use ptt_core::scorer::{NeuralScorer, ScorerClient};
use ptt_core::{SentencePair, TOOLKIT_VERSION};
use serde::Deserialize;

use crate::config::RunConfig;
use crate::report::{single_table, DatasetInfo, EvalReport};
use crate::Invalid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum HypFormat {
    /// One hypothesis per line, aligned with the selected pairs.
    Text,
    /// `{"id": ..., "hyp": ...}` per line, matched by pair id.
    Jsonl,
}

impl HypFormat {
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") => HypFormat::Jsonl,
            _ => HypFormat::Text,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HypRecord {
    id: String,
    hyp: String,
}

/// Hypotheses in the order of `pairs`.
pub fn read_hypotheses(path: &Path, format: HypFormat, pairs: &[&SentencePair]) -> anyhow::Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match format {
        HypFormat::Text => {
            let hyps: Vec<String> = text.lines().map(str::to_owned).collect();
            if hyps.len() != pairs.len() {
                return Err(Invalid(format!(
                    "{} has {} lines but the selected split has {} sentence pairs",
                    path.display(),
                    hyps.len(),
                    pairs.len()
                ))
                .into());
            }
            Ok(hyps)
        }
        HypFormat::Jsonl => {
            let mut by_id: HashMap<String, String> = HashMap::new();
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let r: HypRecord = serde_json::from_str(line)
                    .map_err(|e| Invalid(format!("{} line {}: {e}", path.display(), i + 1)))?;
                if by_id.insert(r.id.clone(), r.hyp).is_some() {
                    return Err(Invalid(format!("{}: duplicate hypothesis id `{}`", path.display(), r.id)).into());
                }
            }
            let hyps: Vec<String> = pairs.iter().filter_map(|p| by_id.remove(&p.id)).collect();
            if hyps.len() != pairs.len() || !by_id.is_empty() {
                let mut unknown: Vec<&String> = by_id.keys().collect();
                unknown.sort();
                return Err(Invalid(format!(
                    "{} matches {} of {} sentence pairs ({} ids not in the split: {:?})",
                    path.display(),
                    hyps.len(),
                    pairs.len(),
                    unknown.len(),
                    unknown.iter().take(5).collect::<Vec<_>>()
                ))
                .into());
            }
            Ok(hyps)
        }
    }
}

pub struct EvalArgs<'a> {
    pub hyp: &'a Path,
    pub hyp_format: HypFormat,
    pub dataset: &'a Path,
    pub out: &'a Path,
    pub system: String,
}

pub struct EvalOutcome {
    pub report: EvalReport,
    pub files: Vec<PathBuf>,
}

pub fn run(args: &EvalArgs<'_>, cfg: &RunConfig) -> anyhow::Result<EvalOutcome> {
    let ds: Dataset = corpus::load(args.dataset)?;
    let pairs: Vec<&SentencePair> = ds.pairs_in(cfg.split).collect();
    if pairs.is_empty() {
        return Err(Invalid(format!("{} has no pairs in the {} split", args.dataset.display(), cfg.split)).into());
    }
    let hyps = read_hypotheses(args.hyp, args.hyp_format, &pairs)?;
    let owned: Vec<SentencePair> = pairs.into_iter().cloned().collect();

    let client = cfg.needs_scorer().then(|| ScorerClient::new(cfg.scorer.clone()));
    let options = EvalOptions {
        metrics: cfg.metrics.clone(),
        bleu: cfg.bleu,
        jobs: cfg.jobs,
    };
    let eval = evaluate_corpus::<f64, _>(&hyps, &owned, &options, client.as_ref().map(|c| c as &dyn NeuralScorer))?;
    let results = aggregate(&eval.sentences)?;

    let report = EvalReport {
        system: args.system.clone(),
        toolkit: TOOLKIT_VERSION.into(),
        dataset: DatasetInfo {
            path: args.dataset.display().to_string(),
            name: ds.manifest.name.clone(),
            content_hash: ds.loaded_hash.clone().unwrap_or_else(|| ds.content_hash()),
        },
        split: cfg.split,
        metrics: cfg.metrics.clone(),
        model_ids: eval.model_ids,
        unavailable: eval.unavailable,
        results,
        config: cfg.to_json(),
    };

    fs::create_dir_all(args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut sentences = String::new();
    for s in &eval.sentences {
        sentences.push_str(&serde_json::to_string(s)?);
        sentences.push('\n');
    }
    let files = vec![
        args.out.join("sentences.jsonl"),
        args.out.join("report.json"),
        args.out.join("report.txt"),
    ];
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    for (path, body) in files.iter().zip([sentences, json, single_table(&report)]) {
        fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(EvalOutcome { report, files })
}
