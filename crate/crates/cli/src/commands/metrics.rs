use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::{Deserialize, Serialize};

use qdagx::exec::Execution;
use qdagx::metrics::{evaluate, MetricReport, METRIC_NAMES};
use qdagx::sampler::Mode;
use qdagx::selection::DEFAULT_FDR;

use super::write_json;
use crate::fitdir::{load_truth, FitDir};
use crate::{invalid, RunContext};

pub const METRICS_FILE: &str = "metrics.json";

#[derive(Args, Debug, Serialize)]
pub struct MetricsArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Simulated bundle the fit was run on.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = DEFAULT_FDR)]
    pub fdr: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub mode: Mode,
    pub fdr: f64,
    pub reports: Vec<MetricReport>,
}

pub fn run(args: &MetricsArgs, ctx: &mut RunContext) -> Result<()> {
    if !(args.fdr > 0.0 && args.fdr < 1.0) {
        return Err(invalid(format!("--fdr must lie in (0, 1), got {}", args.fdr)));
    }
    let fit = FitDir::open(&args.fit, ctx)?;
    let truth = load_truth(&args.truth, &fit, ctx)?;
    let mut reports = Vec::new();
    for &tau in &fit.info.taus {
        let draws = fit.draws(tau)?;
        reports.push(evaluate(&truth, &fit.data, &draws, args.fdr, Execution::Parallel)?);
    }

    let mut w = csv::Writer::from_path(args.out.join("metrics.csv"))?;
    w.write_record(["mode", "tau", "metric", "value"])?;
    let mode = fit.info.mode.to_string();
    for r in &reports {
        for (name, v) in METRIC_NAMES.iter().zip(r.values()) {
            w.write_record([mode.as_str(), &r.tau.to_string(), name, &v.map(|v| v.to_string()).unwrap_or_default()])?;
        }
    }
    w.flush()?;
    write_json(&args.out.join(METRICS_FILE), &MetricsFile { mode: fit.info.mode, fdr: args.fdr, reports })
}
