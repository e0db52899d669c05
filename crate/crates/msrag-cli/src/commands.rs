//! Subcommand implementations and exit-code mapping.
//!
//! Exit codes: 0 success, 1 fatal runtime error, 2 configuration error
//! (clap argument errors also exit 2).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use msrag::eval::reference::reference_markdown;
use msrag::eval::{
    load_dataset, render_csv, render_markdown, DatasetSchema, RunManifest, RunReport,
};
use msrag::{AnswerKind, CancelToken, Mode, Pipeline, Question, Selector};

use crate::config::{CliConfig, DatasetSpec, ProviderChoice};

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| {
        "allowed values: full, no-gpt, no-web, gpt-only, web-only, direct-only".to_string()
    })
}

fn parse_schema(s: &str) -> Result<DatasetSchema, String> {
    DatasetSchema::parse(s)
        .ok_or_else(|| "allowed values: hotpot, 2wiki, strategyqa, generic".to_string())
}

fn parse_selector(s: &str) -> Result<Selector, String> {
    Selector::parse(s).ok_or_else(|| "allowed values: oracle, consensus".to_string())
}

fn parse_providers(s: &str) -> Result<ProviderChoice, String> {
    ProviderChoice::parse(s).ok_or_else(|| "allowed values: mock, http".to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "msrag",
    version,
    about = "Multi-source retrieval question answering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one mode over the configured datasets.
    Run(RunArgs),
    /// Sweep the ablation modes and emit the comparison table.
    Ablate(CommonArgs),
    /// Answer a single question and print the per-channel trace.
    Ask(AskArgs),
    /// Re-render report tables from saved run reports.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// JSON-lines dataset path (replaces datasets from the config file).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_parser = parse_schema)]
    pub schema: Option<DatasetSchema>,
    /// Dataset tag used in reports; defaults to the file stem.
    #[arg(long)]
    pub tag: Option<String>,
    /// Independent passes per mode.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_selector)]
    pub selector: Option<Selector>,
    #[arg(long, value_parser = parse_providers)]
    pub providers: Option<ProviderChoice>,
    /// Mock script file pinning responses per question.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Treat any cache miss as an error (hermetic replay).
    #[arg(long)]
    pub replay_strict: bool,
    /// Worker threads; 0 = default, 1 = sequential.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Evaluate only the first N examples (or a seeded random N with
    /// --sample-seed).
    #[arg(long)]
    pub sample_n: Option<usize>,
    #[arg(long)]
    pub sample_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
}

#[derive(Debug, Args)]
pub struct AskArgs {
    /// The question text.
    pub question: String,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    /// Reference answer, required by the oracle selector.
    #[arg(long)]
    pub gold: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Merge the config file with flag overrides.
fn resolve(common: &CommonArgs, mode: Option<Mode>) -> Result<CliConfig> {
    let mut cfg = match &common.config {
        Some(path) => CliConfig::from_file(path)?,
        None => CliConfig::default(),
    };
    if let Some(mode) = mode {
        cfg.pipeline.mode = mode;
    }
    if let Some(dataset) = &common.dataset {
        let schema = common.schema.unwrap_or(DatasetSchema::Generic);
        cfg.datasets = vec![DatasetSpec {
            path: dataset.clone(),
            schema,
            tag: common.tag.clone(),
        }];
    } else if let (Some(schema), Some(spec)) = (common.schema, cfg.datasets.first_mut()) {
        spec.schema = schema;
    }
    if let Some(runs) = common.runs {
        cfg.pipeline.runs = runs;
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(selector) = common.selector {
        cfg.selector = selector;
    }
    if let Some(providers) = common.providers {
        cfg.providers = providers;
    }
    if let Some(script) = &common.mock_script {
        cfg.mock_script = Some(script.clone());
    }
    if let Some(cache_dir) = &common.cache_dir {
        cfg.pipeline.cache_dir = Some(cache_dir.clone());
    }
    if common.replay_strict {
        cfg.pipeline.replay_strict = true;
    }
    if let Some(workers) = common.workers {
        cfg.workers = workers;
    }
    if let Some(seed) = common.seed {
        cfg.pipeline.random_seed = seed;
    }
    if let Some(n) = common.sample_n {
        cfg.sample_n = Some(n);
    }
    if let Some(seed) = common.sample_seed {
        cfg.sample_seed = Some(seed);
    }
    Ok(cfg)
}

fn cancel_on_ctrl_c() -> CancelToken {
    let token = CancelToken::new();
    let handle = token.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        eprintln!("interrupt received, draining in-flight examples");
        handle.cancel();
    }) {
        log::warn!("cannot install interrupt handler: {e}");
    }
    token
}

pub fn dispatch(cli: Cli) -> ExitCode {
    let outcome = match cli.command {
        Command::Run(args) => run_command(&args),
        Command::Ablate(args) => ablate_command(&args),
        Command::Ask(args) => ask_command(&args),
        Command::Report(args) => report_command(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn config_error(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {message}");
    ExitCode::from(2)
}

/// Directory layout: <out>/<tag>/<mode>/run-<i>/manifest.json plus
/// <out>/<tag>/<mode>/report.json; combined tables live at <out>/report.{md,csv}.
fn mode_dir(out: &Path, tag: &str, mode: Mode) -> PathBuf {
    out.join(tag).join(mode.label())
}

/// A mode run is a no-op when its report exists with the same config and
/// dataset digests.
fn already_complete(dir: &Path, config_digest: &str, dataset_digest: &str) -> bool {
    RunReport::load(&dir.join("report.json"))
        .map(|r| r.config_digest == config_digest && r.dataset_digest == dataset_digest)
        .unwrap_or(false)
}

fn run_mode_over_dataset(
    cfg: &CliConfig,
    spec: &DatasetSpec,
    mode: Mode,
    cancel: &CancelToken,
) -> Result<RunReport> {
    let tag = spec.tag();
    let questions = load_dataset(&spec.path, spec.schema, &tag, cfg.sample())?;
    if questions.is_empty() {
        bail!("dataset {} has no records", spec.path.display());
    }

    let mut pipeline_cfg = cfg.pipeline.clone();
    pipeline_cfg.mode = mode;
    let config_digest = msrag::canon::digest_of(&pipeline_cfg);
    let dataset_digest = msrag::canon::digest_of(&questions);

    let dir = mode_dir(&cfg.out, &tag, mode);
    if already_complete(&dir, &config_digest, &dataset_digest) {
        println!("skipping {tag}/{mode}: already complete for this config");
        return Ok(RunReport::load(&dir.join("report.json"))?);
    }

    let providers = cfg.build_providers()?;
    let pipeline = Pipeline::new(pipeline_cfg, cfg.selector, providers);
    let runs = cfg.pipeline.runs;

    let mut per_run = Vec::new();
    let mut incomplete = false;
    for run_index in 0..runs {
        if cancel.is_cancelled() {
            incomplete = true;
            break;
        }
        let mut manifest = pipeline.run_dataset(&questions, run_index, cfg.workers, cancel);
        manifest.sample = cfg.sample();
        incomplete |= manifest.incomplete;
        manifest.save(&dir.join(format!("run-{run_index}")).join("manifest.json"))?;
        if let Some(metrics) = &manifest.metrics {
            per_run.push(metrics.clone());
        }
        print_run_line(&manifest);
    }

    let report = RunReport::from_runs(
        tag.clone(),
        mode,
        cfg.selector,
        per_run,
        config_digest,
        dataset_digest,
    );
    if incomplete {
        // Partial manifests stay on disk but the mode is not marked complete.
        println!("{tag}/{mode}: interrupted; mode left incomplete");
    } else {
        report.save(&dir.join("report.json"))?;
    }
    Ok(report)
}

fn print_run_line(manifest: &RunManifest) {
    let m = manifest.metrics.as_ref();
    let fmt = |v: Option<f64>| {
        v.map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".to_string())
    };
    println!(
        "{}/{} run {}: em {} f1 {} acc {} ({} scored, {} errored{})",
        manifest.dataset_tag,
        manifest.mode,
        manifest.run_index,
        fmt(m.and_then(|m| m.em)),
        fmt(m.and_then(|m| m.f1)),
        fmt(m.and_then(|m| m.acc)),
        m.map(|m| m.scored).unwrap_or(0),
        m.map(|m| m.errored).unwrap_or(0),
        if manifest.incomplete {
            ", incomplete"
        } else {
            ""
        },
    );
}

fn write_combined_report(out: &Path, reports: &[RunReport]) -> Result<()> {
    let markdown = format!(
        "# Results\n\n{}\n## Reference results (reported)\n\n{}",
        render_markdown(reports),
        reference_markdown()
    );
    fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))?;
    fs::write(out.join("report.md"), &markdown)?;
    fs::write(out.join("report.csv"), render_csv(reports))?;
    println!("\n{}", render_markdown(reports));
    println!("reports written to {}", out.display());
    Ok(())
}

fn run_command(args: &RunArgs) -> Result<ExitCode> {
    let cfg = match resolve(&args.common, args.mode) {
        Ok(cfg) => cfg,
        Err(e) => return Ok(config_error(format!("{e:#}"))),
    };
    if let Err(e) = cfg.validate() {
        return Ok(config_error(format!("{e:#}")));
    }
    if cfg.datasets.is_empty() {
        return Ok(config_error(
            "no dataset configured; pass --dataset or list datasets in the config file",
        ));
    }

    let cancel = cancel_on_ctrl_c();
    let mut reports = Vec::new();
    for spec in &cfg.datasets {
        reports.push(run_mode_over_dataset(
            &cfg,
            spec,
            cfg.pipeline.mode,
            &cancel,
        )?);
        if cancel.is_cancelled() {
            return Ok(ExitCode::from(1));
        }
    }
    write_combined_report(&cfg.out, &reports)?;
    Ok(ExitCode::SUCCESS)
}

fn ablate_command(common: &CommonArgs) -> Result<ExitCode> {
    let cfg = match resolve(common, None) {
        Ok(cfg) => cfg,
        Err(e) => return Ok(config_error(format!("{e:#}"))),
    };
    if let Err(e) = cfg.validate() {
        return Ok(config_error(format!("{e:#}")));
    }
    if cfg.datasets.is_empty() {
        return Ok(config_error(
            "no dataset configured; pass --dataset or list datasets in the config file",
        ));
    }

    let cancel = cancel_on_ctrl_c();
    let mut reports = Vec::new();
    for spec in &cfg.datasets {
        for mode in Mode::ABLATION {
            reports.push(run_mode_over_dataset(&cfg, spec, mode, &cancel)?);
            if cancel.is_cancelled() {
                return Ok(ExitCode::from(1));
            }
        }
    }
    write_combined_report(&cfg.out, &reports)?;
    Ok(ExitCode::SUCCESS)
}

fn ask_command(args: &AskArgs) -> Result<ExitCode> {
    let mut cfg = match resolve(&args.common, args.mode) {
        Ok(cfg) => cfg,
        Err(e) => return Ok(config_error(format!("{e:#}"))),
    };
    // One-shot queries without a reference default to the reference-free
    // selector; an explicit --gold keeps whatever the config chose.
    if args.common.selector.is_none() && args.gold.is_none() {
        cfg.selector = Selector::Consensus;
    }
    if cfg.selector == Selector::Oracle && args.gold.is_none() {
        return Ok(config_error(
            "the oracle selector compares against a reference answer; pass --gold or use --selector consensus",
        ));
    }
    if let Err(e) = cfg.validate() {
        return Ok(config_error(format!("{e:#}")));
    }

    let gold = args.gold.clone().unwrap_or_else(|| "n/a".to_string());
    let question = match Question::new("ask", &args.question, vec![gold], AnswerKind::Span, "ask") {
        Ok(q) => q,
        Err(e) => return Ok(config_error(e)),
    };

    let providers = cfg.build_providers()?;
    let pipeline = Pipeline::new(cfg.pipeline.clone(), cfg.selector, providers);
    let manifest = pipeline.run_dataset(&[question], 0, 1, &CancelToken::new());
    let record = &manifest.records[0];

    if let Some(error) = &record.error {
        eprintln!("error: {error}");
        return Ok(ExitCode::from(1));
    }

    println!("answer: {}", record.answer.as_deref().unwrap_or(""));
    println!(
        "channel: {}",
        record
            .answer_channel
            .map(|c| c.to_string())
            .unwrap_or_default()
    );
    println!("\ncandidates:");
    for candidate in &record.candidates {
        println!("  [{}] {}", candidate.channel, candidate.text);
    }
    if let Some(selection) = &record.selection {
        println!("\nsimilarities ({} selector):", cfg.selector.label());
        for (channel, score) in &selection.similarities {
            println!("  {channel}: {score:.4}");
        }
        if selection.tie_broken {
            println!("  (tie broken by channel priority)");
        }
    }

    let path = cfg.out.join("ask").join("manifest.json");
    manifest.save(&path)?;
    println!("\ntrace written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn collect_reports(out: &Path) -> Result<Vec<RunReport>> {
    let mut reports = Vec::new();
    if !out.is_dir() {
        return Ok(reports);
    }
    for tag_entry in fs::read_dir(out)? {
        let tag_dir = tag_entry?.path();
        if !tag_dir.is_dir() {
            continue;
        }
        for mode_entry in fs::read_dir(&tag_dir)? {
            let report_path = mode_entry?.path().join("report.json");
            if report_path.is_file() {
                reports.push(RunReport::load(&report_path)?);
            }
        }
    }
    // Stable ordering for rendering.
    reports.sort_by(|a, b| {
        (a.dataset_tag.as_str(), a.mode.label()).cmp(&(b.dataset_tag.as_str(), b.mode.label()))
    });
    Ok(reports)
}

fn report_command(args: &ReportArgs) -> Result<ExitCode> {
    let cfg = match &args.config {
        Some(path) => match CliConfig::from_file(path) {
            Ok(cfg) => cfg,
            Err(e) => return Ok(config_error(format!("{e:#}"))),
        },
        None => CliConfig::default(),
    };
    let out = args.out.clone().unwrap_or(cfg.out);
    let reports = collect_reports(&out)?;
    if reports.is_empty() {
        return Ok(config_error(format!(
            "no run reports found under {}",
            out.display()
        )));
    }
    write_combined_report(&out, &reports)?;
    Ok(ExitCode::SUCCESS)
}
