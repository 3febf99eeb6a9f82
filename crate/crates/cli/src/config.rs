//! Run configuration: one TOML file, overridden by environment, then flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use ptt_core::metric::{BleuConfig, MetricKind};
use ptt_core::scorer::ScorerConfig;
use ptt_core::Split;
use serde::{Deserialize, Serialize};

pub const SCORER_URL_ENV: &str = "PTT_SCORER_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub metrics: Vec<MetricKind>,
    /// Dataset split evaluated by `eval`.
    pub split: Split,
    pub jobs: usize,
    pub seed: u64,
    /// Train, valid and test fractions for `split`.
    pub fractions: [f64; 3],
    /// Generation passes per cluster for `generate`.
    pub passes: usize,
    /// Provider settings file for `generate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provider: Option<PathBuf>,
    pub bleu: BleuConfig,
    pub scorer: ScorerConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            metrics: vec![MetricKind::Bleu],
            split: Split::Test,
            jobs: 1,
            seed: 0,
            fractions: [0.8, 0.1, 0.1],
            passes: 1,
            provider: None,
            bleu: BleuConfig::default(),
            scorer: ScorerConfig::default(),
        }
    }
}

/// Flag values that override the file. `None` leaves the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub metrics: Option<Vec<MetricKind>>,
    pub split: Option<Split>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub fractions: Option<[f64; 3]>,
    pub passes: Option<usize>,
    pub provider: Option<PathBuf>,
    pub scorer_url: Option<String>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// File (or defaults), then `PTT_SCORER_URL`, then flags.
    pub fn resolve(file: Option<&Path>, env_scorer_url: Option<String>, flags: Overrides) -> anyhow::Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        if let Some(url) = env_scorer_url.filter(|u| !u.is_empty()) {
            cfg.scorer.endpoint = url;
        }
        let Overrides {
            metrics,
            split,
            jobs,
            seed,
            fractions,
            passes,
            provider,
            scorer_url,
        } = flags;
        if let Some(v) = metrics {
            cfg.metrics = v;
        }
        if let Some(v) = split {
            cfg.split = v;
        }
        if let Some(v) = jobs {
            cfg.jobs = v;
        }
        if let Some(v) = seed {
            cfg.seed = v;
        }
        if let Some(v) = fractions {
            cfg.fractions = v;
        }
        if let Some(v) = passes {
            cfg.passes = v;
        }
        if provider.is_some() {
            cfg.provider = provider;
        }
        if let Some(v) = scorer_url {
            cfg.scorer.endpoint = v;
        }
        cfg.metrics.sort();
        cfg.metrics.dedup();
        anyhow::ensure!(!cfg.metrics.is_empty(), "no metrics selected");
        anyhow::ensure!(cfg.jobs >= 1, "jobs must be at least 1");
        anyhow::ensure!(cfg.passes >= 1, "passes must be at least 1");
        Ok(cfg)
    }

    pub fn needs_scorer(&self) -> bool {
        self.metrics.iter().any(|m| m.neural().is_some())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
