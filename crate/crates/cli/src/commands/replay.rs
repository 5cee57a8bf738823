use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser};
use serde::Serialize;

use crate::manifest::{input_hash, RunManifest, MANIFEST_FILE};
use crate::{invalid, run_recorded, Cli, CliError};

#[derive(Args, Debug, Serialize)]
pub struct ReplayArgs {
    /// A manifest.json, or the output directory that holds it.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Fresh directory for the replayed outputs.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct ReplayReport {
    command: String,
    identical: bool,
    compared: usize,
    mismatched: Vec<String>,
    missing: Vec<String>,
    extra: Vec<String>,
    recorded_version: String,
    version: String,
}

fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(if path.is_absolute() { path.to_path_buf() } else { std::env::current_dir()?.join(path) })
}

/// Points the recorded `--out` at `out`.
fn rewrite_out(argv: &[String], out: &Path) -> Result<Vec<String>> {
    let out = out.display().to_string();
    let mut rewritten = Vec::with_capacity(argv.len());
    let mut hits = 0;
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            it.next();
            rewritten.push(a.clone());
            rewritten.push(out.clone());
            hits += 1;
        } else if a.starts_with("--out=") {
            rewritten.push(format!("--out={out}"));
            hits += 1;
        } else {
            rewritten.push(a.clone());
        }
    }
    if hits != 1 {
        return Err(invalid(format!("recorded command has {hits} --out arguments")));
    }
    Ok(rewritten)
}

pub fn run(args: &ReplayArgs) -> Result<()> {
    let path = if args.manifest.is_dir() { args.manifest.join(MANIFEST_FILE) } else { args.manifest.clone() };
    let recorded = RunManifest::read(&path)?;
    let out = absolute(&args.out)?;
    let original = Cli::try_parse_from(&recorded.argv)
        .map_err(|e| invalid(format!("recorded command no longer parses: {e}")))?;
    if recorded.cwd.join(original.command.out()) == out {
        return Err(invalid("replay output directory is the recorded one"));
    }

    std::env::set_current_dir(&recorded.cwd)
        .with_context(|| format!("entering recorded working directory {}", recorded.cwd.display()))?;
    let changed: Vec<&str> = recorded
        .inputs
        .iter()
        .filter(|(p, h)| input_hash(Path::new(p)).map_or(true, |now| &now != *h))
        .map(|(p, _)| p.as_str())
        .collect();
    if !changed.is_empty() {
        return Err(CliError::ReplayMismatch(format!("inputs changed since the recorded run: {changed:?}")).into());
    }

    let argv = rewrite_out(&recorded.argv, &out)?;
    let cli = Cli::try_parse_from(&argv).map_err(|e| invalid(e.to_string()))?;
    let replayed = run_recorded(argv, &cli.command)?;

    let mut mismatched = Vec::new();
    let mut missing = Vec::new();
    for (file, hash) in &recorded.outputs {
        match replayed.outputs.get(file) {
            Some(h) if h == hash => {}
            Some(_) => mismatched.push(file.clone()),
            None => missing.push(file.clone()),
        }
    }
    let extra: Vec<String> = replayed.outputs.keys().filter(|k| !recorded.outputs.contains_key(*k)).cloned().collect();
    let identical = mismatched.is_empty() && missing.is_empty() && extra.is_empty();
    let report = ReplayReport {
        command: recorded.command.clone(),
        identical,
        compared: recorded.outputs.len(),
        mismatched,
        missing,
        extra,
        recorded_version: recorded.version.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    println!("{}", serde_json::to_string(&report)?);
    if !identical {
        return Err(CliError::ReplayMismatch(format!(
            "{} of {} outputs differ from the recorded run",
            report.mismatched.len() + report.missing.len() + report.extra.len(),
            report.compared
        ))
        .into());
    }
    Ok(())
}
