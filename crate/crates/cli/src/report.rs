//! Evaluation report files and the comparison tables built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ptt_core::metric::{Aggregate, CorpusReport, MetricKind};
use ptt_core::{Domain, Split};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: String,
    pub name: String,
    pub content_hash: String,
}

/// Contents of `report.json` written by `ptt eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub toolkit: String,
    pub dataset: DatasetInfo,
    pub split: Split,
    pub metrics: Vec<MetricKind>,
    /// Scorer model per neural metric that was computed.
    pub model_ids: BTreeMap<MetricKind, String>,
    /// Requested metrics that could not be computed, with the reason.
    pub unavailable: BTreeMap<MetricKind, String>,
    pub results: CorpusReport<f64>,
    pub config: Value,
}

impl EvalReport {
    pub fn is_partial(&self) -> bool {
        !self.unavailable.is_empty()
    }

    fn aggregate(&self, domain: Option<Domain>) -> Option<&Aggregate<f64>> {
        match domain {
            None => Some(&self.results.overall),
            Some(d) => self.results.per_domain.get(&d),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Weight,
    Weighted(MetricKind),
    Raw(MetricKind),
}

pub const COLUMNS: [Column; 7] = [
    Column::Weight,
    Column::Weighted(MetricKind::Bleu),
    Column::Weighted(MetricKind::Comet),
    Column::Weighted(MetricKind::Bertscore),
    Column::Raw(MetricKind::Bleu),
    Column::Raw(MetricKind::Comet),
    Column::Raw(MetricKind::Bertscore),
];

fn short(kind: MetricKind) -> &'static str {
    match kind {
        MetricKind::Bleu => "BLEU",
        MetricKind::Comet => "COMET",
        MetricKind::Bertscore => "BERT",
    }
}

impl Column {
    pub fn label(self) -> String {
        match self {
            Column::Weight => "W_terms".into(),
            Column::Weighted(k) => format!("M_PTT({})", short(k)),
            Column::Raw(k) => short(k).into(),
        }
    }

    pub fn key(self) -> String {
        match self {
            Column::Weight => "w_terms".into(),
            Column::Weighted(k) => format!("m_ptt_{k}"),
            Column::Raw(k) => k.to_string(),
        }
    }

    pub fn value(self, agg: &Aggregate<f64>) -> Option<f64> {
        match self {
            Column::Weight => Some(agg.mean_weight),
            Column::Weighted(k) => agg.mean_weighted.get(&k).copied(),
            Column::Raw(k) => agg.mean_raw.get(&k).copied(),
        }
    }

    fn format(self, v: f64) -> String {
        match self {
            Column::Weight => format!("{v:.3}"),
            Column::Weighted(MetricKind::Bleu) | Column::Raw(MetricKind::Bleu) => format!("{v:.2}"),
            _ => format!("{v:.4}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TableFormat {
    Text,
    Markdown,
}

/// Plain table with right-aligned numeric columns. `marked[r][c]` appends
/// `*` (text) or bolds the cell (markdown).
fn render(header: &[String], rows: &[Vec<String>], marked: &[Vec<bool>], format: TableFormat) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .zip(marked)
        .map(|(row, marks)| {
            row.iter()
                .enumerate()
                .map(|(c, cell)| match (c > 0 && marks[c - 1], format) {
                    (true, TableFormat::Text) => format!("{cell}*"),
                    (true, TableFormat::Markdown) => format!("**{cell}**"),
                    (false, TableFormat::Text) if c > 0 => format!("{cell} "),
                    _ => cell.clone(),
                })
                .collect()
        })
        .collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap()
        })
        .collect();
    let line = |row: &[String]| -> String {
        let parts: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        match format {
            TableFormat::Text => parts.join("  ").trim_end().to_owned(),
            TableFormat::Markdown => format!("| {} |", parts.join(" | ")),
        }
    };
    let mut out = line(header);
    out.push('\n');
    match format {
        TableFormat::Text => out.push_str(&"-".repeat(out.trim_end().chars().count())),
        TableFormat::Markdown => {
            let seps: Vec<String> = widths
                .iter()
                .enumerate()
                .map(|(c, w)| if c == 0 { "-".repeat(*w) } else { format!("{}:", "-".repeat(w - 1)) })
                .collect();
            out.push_str(&format!("| {} |", seps.join(" | ")));
        }
    }
    out.push('\n');
    for row in &cells {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn cell(col: Column, agg: Option<&Aggregate<f64>>) -> String {
    agg.and_then(|a| col.value(a)).map_or_else(|| "n/a".to_owned(), |v| col.format(v))
}

/// `report.txt` for one system: the corpus row followed by one row per domain.
pub fn single_table(report: &EvalReport) -> String {
    let mut header = vec!["domain".to_owned()];
    header.extend(COLUMNS.iter().map(|c| c.label()));
    header.push("n".into());
    let mut rows = Vec::new();
    let mut push = |name: String, agg: &Aggregate<f64>| {
        let mut row = vec![name];
        row.extend(COLUMNS.iter().map(|&c| cell(c, Some(agg))));
        row.push(agg.n_sentences.to_string());
        rows.push(row);
    };
    push("all".into(), &report.results.overall);
    for (d, agg) in &report.results.per_domain {
        push(d.to_string(), agg);
    }
    let marked = vec![vec![false; COLUMNS.len() + 1]; rows.len()];
    let mut out = format!(
        "system: {}\ndataset: {} ({})\nsplit: {}\n",
        report.system, report.dataset.path, report.dataset.content_hash, report.split
    );
    for (k, id) in &report.model_ids {
        let _ = writeln!(out, "{k} model: {id}");
    }
    for (k, why) in &report.unavailable {
        let _ = writeln!(out, "{k} unavailable: {why}");
    }
    out.push('\n');
    out.push_str(&render(&header, &rows, &marked, TableFormat::Text));
    out
}

#[derive(Debug, thiserror::Error)]
pub enum MergeError {
    #[error("no reports given")]
    Empty,
    #[error(
        "dataset hash mismatch: {first} has {first_hash}, {other} has {other_hash}; \
         reports must evaluate the same data"
    )]
    HashMismatch {
        first: String,
        first_hash: String,
        other: String,
        other_hash: String,
    },
    #[error("split mismatch: {first} evaluates {first_split}, {other} evaluates {other_split}")]
    SplitMismatch {
        first: String,
        first_split: Split,
        other: String,
        other_split: Split,
    },
}

/// A model-by-metric comparison of several evaluations of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub domain: Option<Domain>,
    pub systems: Vec<String>,
    /// `values[row][col]` over [`COLUMNS`].
    pub values: Vec<Vec<Option<f64>>>,
    /// Highest value per column; ties all count.
    pub best: Vec<Vec<bool>>,
    pub dataset: DatasetInfo,
    pub split: Split,
}

/// Merges `(label, report)` pairs. Labels name the source files in errors.
pub fn compare(reports: &[(String, EvalReport)], domain: Option<Domain>) -> Result<Comparison, MergeError> {
    let (first_label, first) = reports.first().ok_or(MergeError::Empty)?;
    for (label, r) in &reports[1..] {
        if r.dataset.content_hash != first.dataset.content_hash {
            return Err(MergeError::HashMismatch {
                first: first_label.clone(),
                first_hash: first.dataset.content_hash.clone(),
                other: label.clone(),
                other_hash: r.dataset.content_hash.clone(),
            });
        }
        if r.split != first.split {
            return Err(MergeError::SplitMismatch {
                first: first_label.clone(),
                first_split: first.split,
                other: label.clone(),
                other_split: r.split,
            });
        }
    }
    let values: Vec<Vec<Option<f64>>> = reports
        .iter()
        .map(|(_, r)| COLUMNS.iter().map(|&c| r.aggregate(domain).and_then(|a| c.value(a))).collect())
        .collect();
    let best = values
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, v)| {
                    let max = values.iter().filter_map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max);
                    v.is_some_and(|v| COLUMNS[c].format(v) == COLUMNS[c].format(max))
                })
                .collect()
        })
        .collect();
    Ok(Comparison {
        domain,
        systems: reports.iter().map(|(_, r)| r.system.clone()).collect(),
        values,
        best,
        dataset: first.dataset.clone(),
        split: first.split,
    })
}

impl Comparison {
    pub fn table(&self, format: TableFormat) -> String {
        let mut header = vec!["system".to_owned()];
        header.extend(COLUMNS.iter().map(|c| c.label()));
        let rows: Vec<Vec<String>> = self
            .systems
            .iter()
            .zip(&self.values)
            .map(|(s, vals)| {
                let mut row = vec![s.clone()];
                row.extend(
                    COLUMNS
                        .iter()
                        .zip(vals)
                        .map(|(c, v)| v.map_or_else(|| "n/a".to_owned(), |v| c.format(v))),
                );
                row
            })
            .collect();
        render(&header, &rows, &self.best, format)
    }

    pub fn to_json(&self) -> Value {
        let systems: Vec<Value> = self
            .systems
            .iter()
            .zip(&self.values)
            .zip(&self.best)
            .map(|((s, vals), best)| {
                let cols: serde_json::Map<String, Value> =
                    COLUMNS.iter().zip(vals).map(|(c, v)| (c.key(), json!(v))).collect();
                let best: Vec<String> = COLUMNS.iter().zip(best).filter(|(_, b)| **b).map(|(c, _)| c.key()).collect();
                json!({"system": s, "values": cols, "best": best})
            })
            .collect();
        json!({
            "toolkit": ptt_core::TOOLKIT_VERSION,
            "dataset": self.dataset,
            "split": self.split,
            "domain": self.domain,
            "systems": systems,
        })
    }
}
