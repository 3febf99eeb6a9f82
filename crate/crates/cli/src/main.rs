//! `ptt`: evaluate, generate, split, validate and compare PTT datasets.
//!
//! Exit status: 0 success, 1 error, 2 usage error, 3 partial success
//! (neural metrics missing), 4 invalid input data, 5 provider failure.

mod config;
mod eval;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ptt_core::corpus::{self, CorpusError, SplitFractions};
use ptt_core::metric::MetricKind;
use ptt_core::{Domain, Split, TOOLKIT_VERSION};
use ptt_genloop::arxiv::ArxivClient;
use ptt_genloop::mock::{StaticArxiv, SyntheticProvider};
use ptt_genloop::run::{self, GenerateOptions, GenerateSummary, RunError};
use ptt_genloop::{HttpChatProvider, ProviderConfig};
use serde_json::json;

use config::{Overrides, RunConfig, SCORER_URL_ENV};
use eval::HypFormat;
use report::{compare, EvalReport, MergeError, TableFormat};

const EXIT_ERROR: u8 = 1;
const EXIT_PARTIAL: u8 = 3;
const EXIT_INVALID: u8 = 4;
const EXIT_PROVIDER: u8 = 5;

/// Input data that breaks a documented rule.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

#[derive(Parser)]
#[command(name = "ptt", version, about = "Parenthetical terminology translation toolkit")]
struct Cli {
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score hypotheses against a dataset split.
    Eval(EvalCmd),
    /// Generate a dataset from term clusters.
    Generate(GenerateCmd),
    /// Assign clusters to train/valid/test.
    Split(SplitCmd),
    /// Check dataset invariants.
    Validate(ValidateCmd),
    /// Compare several eval reports in one table.
    Report(ReportCmd),
}

#[derive(Args)]
struct EvalCmd {
    /// Hypotheses: plain text, one per line, or line-JSON with `id` and `hyp`.
    hyp: PathBuf,
    /// Dataset (.jsonl with manifest).
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for sentences.jsonl, report.json and report.txt.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated metrics: bleu, comet, bertscore.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<MetricKind>>,
    /// Split to score (default test).
    #[arg(long)]
    split: Option<Split>,
    /// Worker threads for BLEU and term weights.
    #[arg(long)]
    jobs: Option<usize>,
    /// Base URL of the neural-metric scorer.
    #[arg(long, env = SCORER_URL_ENV, hide_env_values = true)]
    scorer_url: Option<String>,
    /// Defaults to `jsonl` for .jsonl files, else `text`.
    #[arg(long, value_enum)]
    hyp_format: Option<HypFormat>,
    /// System name shown in reports. Defaults to the hypothesis file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct GenerateCmd {
    /// Term clusters: JSON array or line-JSON of {cluster_id, domain, terms}.
    clusters: PathBuf,
    /// Output directory for transcripts, dataset.jsonl and review.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Provider settings (TOML). The API key comes from the variable it names.
    #[arg(long)]
    provider: Option<PathBuf>,
    /// Run offline with the built-in synthetic provider and arXiv stand-in.
    #[arg(long)]
    mock: bool,
    /// Generation passes per cluster.
    #[arg(long)]
    passes: Option<usize>,
    /// Clusters processed concurrently. Defaults to the provider setting.
    #[arg(long)]
    jobs: Option<usize>,
    /// Regenerate every cluster, ignoring existing transcripts.
    #[arg(long)]
    no_resume: bool,
    /// Apply decisions from <out>/review.jsonl and rebuild the dataset.
    #[arg(long)]
    apply_review: bool,
    #[arg(long, default_value = "ptt-generated")]
    name: String,
}

#[derive(Args)]
struct SplitCmd {
    /// Unsplit dataset (.jsonl with manifest).
    dataset: PathBuf,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
    /// train,valid,test fractions.
    #[arg(long)]
    fractions: Option<SplitFractions>,
    /// Shuffle seed (default 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Allow replacing existing split tags.
    #[arg(long)]
    resplit: bool,
}

#[derive(Args)]
struct ValidateCmd {
    /// Dataset (.jsonl with manifest).
    dataset: PathBuf,
    /// Print diagnostics as line-JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportCmd {
    /// report.json files written by `ptt eval`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Compare one domain instead of the whole split.
    #[arg(long)]
    domain: Option<Domain>,
    /// Also write the merged JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Text,
    Markdown,
    Json,
}

fn resolve(cli_config: Option<&Path>, flags: Overrides) -> anyhow::Result<RunConfig> {
    // The scorer URL variable is read by clap for `eval`; elsewhere read it here.
    let env = std::env::var(SCORER_URL_ENV).ok();
    RunConfig::resolve(cli_config, env, flags)
}

fn cmd_eval(cmd: EvalCmd, config: Option<&Path>) -> anyhow::Result<u8> {
    let cfg = resolve(
        config,
        Overrides {
            metrics: cmd.metrics,
            split: cmd.split,
            jobs: cmd.jobs,
            scorer_url: cmd.scorer_url,
            ..Overrides::default()
        },
    )?;
    let system = cmd.name.unwrap_or_else(|| {
        cmd.hyp.file_stem().map_or_else(|| "system".into(), |s| s.to_string_lossy().into_owned())
    });
    let args = eval::EvalArgs {
        hyp: &cmd.hyp,
        hyp_format: cmd.hyp_format.unwrap_or_else(|| HypFormat::infer(&cmd.hyp)),
        dataset: &cmd.dataset,
        out: &cmd.out,
        system,
    };
    let outcome = eval::run(&args, &cfg)?;
    print!("{}", report::single_table(&outcome.report));
    for f in &outcome.files {
        eprintln!("wrote {}", f.display());
    }
    Ok(if outcome.report.is_partial() { EXIT_PARTIAL } else { 0 })
}

fn print_generate(summary: &GenerateSummary, out: &Path) {
    let failed: Vec<String> = summary.failed().map(|t| format!("{}/p{}", t.cluster_id, t.pass)).collect();
    println!(
        "{} transcripts ({} resumed), {} provider calls, {} pairs, {} for review, {} failed",
        summary.transcripts.len(),
        summary.resumed,
        summary.fresh_calls,
        summary.dataset.pairs.len(),
        summary.review.len(),
        failed.len()
    );
    if !failed.is_empty() {
        println!("failed clusters: {}", failed.join(", "));
    }
    println!("dataset: {}", out.join("dataset.jsonl").display());
}

fn cmd_generate(cmd: GenerateCmd, config: Option<&Path>) -> anyhow::Result<u8> {
    let cfg = resolve(
        config,
        Overrides {
            passes: cmd.passes,
            provider: cmd.provider,
            ..Overrides::default()
        },
    )?;
    // Validated before any network traffic.
    let clusters = run::load_clusters(&cmd.clusters)?;
    let provider_cfg = match &cfg.provider {
        Some(p) => ProviderConfig::from_file(p)?,
        None => ProviderConfig::default(),
    };
    let mut opts = GenerateOptions::new(&cmd.out);
    opts.dataset_name = cmd.name;
    opts.passes = cfg.passes;
    opts.parallelism = cmd.jobs.unwrap_or(provider_cfg.parallelism);
    opts.max_rounds = provider_cfg.max_rounds;
    opts.resume = !cmd.no_resume;
    let provider_json = serde_json::to_value(&provider_cfg)?;
    opts.fingerprint = json!({"toolkit": TOOLKIT_VERSION, "provider": provider_json, "passes": cfg.passes, "mock": cmd.mock})
        .to_string();
    opts.provenance = Some(json!({
        "command": "generate",
        "clusters": cmd.clusters.display().to_string(),
        "mock": cmd.mock,
        "config": cfg.to_json(),
        "provider": provider_json,
    }));

    let summary = if cmd.apply_review {
        let (changed, summary) = run::apply_review(&clusters, &opts)?;
        println!("applied {changed} review decisions");
        summary
    } else if cmd.mock {
        run::generate(&clusters, &SyntheticProvider::new(), &StaticArxiv::echo(), &opts)?
    } else {
        let mut arxiv_cfg = provider_cfg.arxiv.clone();
        arxiv_cfg.cache_dir.get_or_insert_with(|| cmd.out.join("arxiv-cache"));
        let arxiv = ArxivClient::new(arxiv_cfg);
        if std::env::var(&provider_cfg.api_key_env).is_err() {
            log::warn!("{} is not set; requests go out without an API key", provider_cfg.api_key_env);
        }
        let provider = HttpChatProvider::new(provider_cfg);
        run::generate(&clusters, &provider, &arxiv, &opts)?
    };
    print_generate(&summary, &cmd.out);
    Ok(if summary.failed().next().is_some() { EXIT_PROVIDER } else { 0 })
}

fn cmd_split(cmd: SplitCmd, config: Option<&Path>) -> anyhow::Result<u8> {
    let cfg = resolve(
        config,
        Overrides {
            seed: cmd.seed,
            fractions: cmd.fractions.map(|f| [f.train, f.valid, f.test]),
            ..Overrides::default()
        },
    )?;
    let [train, valid, test] = cfg.fractions;
    let fractions = SplitFractions::new(train, valid, test);
    let ds = corpus::load(&cmd.dataset)?;
    let mut out = corpus::split(&ds, fractions, cfg.seed, cmd.resplit)?;
    out.manifest.provenance = Some(json!({
        "command": "split",
        "source": cmd.dataset.display().to_string(),
        "source_hash": ds.loaded_hash,
        "seed": cfg.seed,
        "fractions": cfg.fractions,
        "resplit": cmd.resplit,
    }));
    corpus::save(&out, &cmd.out)?;
    let targets = corpus::split_targets(out.pairs.len(), &fractions);
    let counts = out.counts();
    for (split, target) in [Split::Train, Split::Valid, Split::Test].iter().zip(targets) {
        let n = counts.by_split.get(split).copied().unwrap_or(0);
        println!("{split:<5} {n:>6} pairs (target {target})");
    }
    println!("wrote {}", cmd.out.display());
    Ok(0)
}

fn cmd_validate(cmd: ValidateCmd) -> anyhow::Result<u8> {
    let ds = corpus::load(&cmd.dataset)?;
    let diags = corpus::validate(&ds);
    for d in &diags {
        if cmd.json {
            println!("{}", serde_json::to_string(d)?);
        } else {
            println!("{d}");
        }
    }
    if !cmd.json {
        let c = ds.counts();
        println!("{} pairs, {} clusters, {} problems", c.total, ds.clusters.len(), diags.len());
    }
    Ok(if diags.is_empty() { 0 } else { EXIT_INVALID })
}

fn cmd_report(cmd: ReportCmd) -> anyhow::Result<u8> {
    let mut reports = Vec::new();
    for path in &cmd.reports {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let r: EvalReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        reports.push((path.display().to_string(), r));
    }
    let cmp = compare(&reports, cmd.domain)?;
    let json = serde_json::to_string_pretty(&cmp.to_json())? + "\n";
    match cmd.format {
        Format::Text => print!("{}", cmp.table(TableFormat::Text)),
        Format::Markdown => print!("{}", cmp.table(TableFormat::Markdown)),
        Format::Json => print!("{json}"),
    }
    if let Some(out) = &cmd.out {
        std::fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Invalid>() || cause.is::<MergeError>() || cause.is::<ptt_core::metric::MetricError>() {
            return EXIT_INVALID;
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return match e {
                CorpusError::Io { .. } => EXIT_ERROR,
                _ => EXIT_INVALID,
            };
        }
        if let Some(RunError::Clusters { .. }) = cause.downcast_ref::<RunError>() {
            return EXIT_INVALID;
        }
    }
    EXIT_ERROR
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let config = cli.config.as_deref();
    let result = match cli.command {
        Command::Eval(c) => cmd_eval(c, config),
        Command::Generate(c) => cmd_generate(c, config),
        Command::Split(c) => cmd_split(c, config),
        Command::Validate(c) => cmd_validate(c),
        Command::Report(c) => cmd_report(c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
