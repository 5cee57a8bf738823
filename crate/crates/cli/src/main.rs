mod commands;
mod fitdir;
mod manifest;
mod table;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Serialize;

use commands::{aggregate, fit, metrics, plotdata, replay, select, simulate};
use manifest::{input_hash, now_ms, prepare_out_dir, tree_hashes, RunManifest, MANIFEST_FILE};
use qdagx::QdagError;

/// Covariate-dependent quantile DAGs: simulation, fitting, selection and
/// reporting.
#[derive(Parser, Debug)]
#[command(name = "qdagx", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Simulate benchmark datasets with known quantile DAGs.
    Simulate(simulate::SimulateArgs),
    /// Run the sampler at one or more quantile levels.
    Fit(fit::FitArgs),
    /// Posterior edge and covariate probabilities with FDR-controlled calls.
    Select(select::SelectArgs),
    /// The nine benchmark metrics of a fit against its simulation truth.
    Metrics(metrics::MetricsArgs),
    /// Population DAGs from per-individual representative graphs, with hubs
    /// and prevalent edges.
    Aggregate(aggregate::AggregateArgs),
    /// Tidy mean/sd table over replicate metric files.
    Plotdata(plotdata::PlotdataArgs),
    /// Re-run a recorded command and compare its outputs bit for bit.
    Replay(replay::ReplayArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Fit(_) => "fit",
            Command::Select(_) => "select",
            Command::Metrics(_) => "metrics",
            Command::Aggregate(_) => "aggregate",
            Command::Plotdata(_) => "plotdata",
            Command::Replay(_) => "replay",
        }
    }

    pub fn out(&self) -> &Path {
        match self {
            Command::Simulate(a) => &a.out,
            Command::Fit(a) => &a.out,
            Command::Select(a) => &a.out,
            Command::Metrics(a) => &a.out,
            Command::Aggregate(a) => &a.out,
            Command::Plotdata(a) => &a.out,
            Command::Replay(a) => &a.out,
        }
    }
}

/// Errors raised by the front-end itself.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    ReplayMismatch(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::ReplayMismatch(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

pub fn invalid(msg: impl Into<String>) -> anyhow::Error {
    CliError::Invalid(msg.into()).into()
}

/// Inputs and resolved settings collected while a command runs.
#[derive(Debug, Default)]
pub struct RunContext {
    pub inputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub resolved: serde_json::Map<String, serde_json::Value>,
}

impl RunContext {
    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), input_hash(path)?);
        Ok(())
    }

    pub fn resolve(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.resolved.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }
}

/// Runs a non-replay command and writes its manifest.
pub fn run_recorded(argv: Vec<String>, command: &Command) -> Result<RunManifest> {
    let started = now_ms();
    let out: PathBuf = command.out().to_path_buf();
    prepare_out_dir(&out)?;
    let mut ctx = RunContext::default();
    match command {
        Command::Simulate(a) => simulate::run(a, &mut ctx)?,
        Command::Fit(a) => fit::run(a, &mut ctx)?,
        Command::Select(a) => select::run(a, &mut ctx)?,
        Command::Metrics(a) => metrics::run(a, &mut ctx)?,
        Command::Aggregate(a) => aggregate::run(a, &mut ctx)?,
        Command::Plotdata(a) => plotdata::run(a, &mut ctx)?,
        Command::Replay(_) => return Err(invalid("a replay cannot be recorded")),
    }
    let mut config = serde_json::to_value(command)?;
    if let Some(obj) = config.as_object_mut().and_then(|o| o.get_mut(command.name())).and_then(|v| v.as_object_mut())
    {
        if !ctx.resolved.is_empty() {
            obj.insert("resolved".into(), serde_json::Value::Object(ctx.resolved));
        }
    }
    let manifest = RunManifest {
        command: command.name().to_string(),
        argv,
        cwd: std::env::current_dir()?,
        config,
        seed: ctx.seed,
        inputs: ctx.inputs,
        outputs: tree_hashes(&out)?,
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
    };
    manifest.write(&out)?;
    Ok(manifest)
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("QDAGX_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("QDAGX_THREADS must be a positive integer, got {raw:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Invalid(_) => "invalid_arguments",
                CliError::ReplayMismatch(_) => "replay_mismatch",
            };
        }
        if let Some(e) = cause.downcast_ref::<QdagError>() {
            return match e {
                QdagError::Input(_) => "input",
                QdagError::Dimension(_) => "dimension",
                QdagError::DegenerateCovariate(_) => "degenerate_covariate",
                QdagError::DegenerateDesign(_) => "degenerate_design",
                QdagError::Cycle(_) => "cycle",
                QdagError::OrderingSearch { .. } => "ordering_search",
                QdagError::Config(_) => "config",
                QdagError::EmptyArchive => "empty_archive",
                QdagError::UndefinedRate(_) => "undefined_rate",
                QdagError::Format(_) => "format",
                QdagError::Io(_) => "io",
                QdagError::Json(_) => "json",
            };
        }
        if cause.is::<csv::Error>() {
            return "csv";
        }
        if cause.is::<serde_json::Error>() {
            return "json";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "runtime"
}

fn report_error(kind: &str, message: &str, chain: Vec<String>) {
    let body = serde_json::json!({ "error": { "kind": kind, "message": message, "causes": chain } });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", e.to_string().trim_end(), Vec::new());
            return ExitCode::from(2);
        }
    };
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Replay(a) => replay::run(a),
        other => run_recorded(argv, other).map(|m| {
            let summary = serde_json::json!({
                "command": m.command,
                "out": other.out(),
                "manifest": other.out().join(MANIFEST_FILE),
                "outputs": m.outputs.len(),
            });
            println!("{summary}");
        }),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = error_kind(&e);
            let causes: Vec<String> = e.chain().skip(1).map(|c| c.to_string()).collect();
            report_error(kind, &e.to_string(), causes);
            ExitCode::from(if kind == "invalid_arguments" { 2 } else { 1 })
        }
    }
}
