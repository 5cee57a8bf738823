use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use qdagx::metrics::plot_rows;

use super::metrics::{MetricsFile, METRICS_FILE};
use crate::RunContext;

#[derive(Args, Debug, Serialize)]
pub struct PlotdataArgs {
    /// A `metrics` output directory or its metrics.json; repeat for every
    /// replicate and mode.
    #[arg(long = "metrics", required = true)]
    pub metrics: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &PlotdataArgs, ctx: &mut RunContext) -> Result<()> {
    let mut pairs = Vec::new();
    for path in &args.metrics {
        let file = if path.is_dir() { path.join(METRICS_FILE) } else { path.clone() };
        ctx.input(&file)?;
        let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
        let m: MetricsFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
        pairs.extend(m.reports.into_iter().map(|r| (m.mode, r)));
    }
    let mut w = csv::Writer::from_path(args.out.join("plotdata.csv"))?;
    w.write_record(["mode", "tau", "metric", "mean", "sd", "count"])?;
    for row in plot_rows(&pairs) {
        w.write_record([
            row.mode.to_string(),
            row.tau.to_string(),
            row.metric,
            row.mean.to_string(),
            row.sd.to_string(),
            row.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
