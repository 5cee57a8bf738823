use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use qdagx::exec::Execution;
use qdagx::simdata::{simulate_replicates, SimDataset, SimSettings};

use super::write_json;
use crate::fitdir::TRUTH_FILE;
use crate::table::{write_table, Table};
use crate::{invalid, RunContext};

#[derive(Args, Debug, Serialize)]
pub struct SimulateArgs {
    /// Number of nodes.
    #[arg(long)]
    pub p: usize,
    /// Number of covariates.
    #[arg(long)]
    pub q: usize,
    /// Number of individuals.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Edge threshold; 0.5 for q ≤ 2 and 1 otherwise when omitted.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn node_names(p: usize) -> Vec<String> {
    (1..=p).map(|h| format!("Y{h}")).collect()
}

pub fn run(args: &SimulateArgs, ctx: &mut RunContext) -> Result<()> {
    if args.replicates == 0 {
        return Err(invalid("--replicates must be at least 1"));
    }
    let mut settings = SimSettings::new(args.n, args.p, args.q, args.seed);
    if let Some(t) = args.threshold {
        settings.threshold = t;
    }
    settings.validate()?;
    ctx.seed = Some(args.seed);
    ctx.resolve("threshold", settings.threshold)?;
    let sets = simulate_replicates(settings, args.replicates, Execution::Parallel)?;
    let width = args.replicates.to_string().len().max(2);
    for (r, set) in sets.iter().enumerate() {
        let dir = args.out.join(format!("rep_{:0width$}", r + 1));
        std::fs::create_dir_all(&dir)?;
        write_bundle(&dir, set)?;
    }
    Ok(())
}

fn write_bundle(dir: &std::path::Path, set: &SimDataset) -> Result<()> {
    let n = set.y.nrows();
    let ids: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    let names = node_names(set.y.ncols());
    write_table(
        &dir.join("Y.csv"),
        &Table { id_header: "id".into(), ids: ids.clone(), names: names.clone(), values: set.y.clone() },
    )?;
    let x_names = (1..=set.x.ncols()).map(|k| format!("X{k}")).collect();
    write_table(&dir.join("X.csv"), &Table { id_header: "id".into(), ids, names: x_names, values: set.x.clone() })?;
    write_json(&dir.join(TRUTH_FILE), &set.truth)?;
    set.truth.dag().write_csv(std::fs::File::create(dir.join("dag.csv"))?, &names)?;
    // the generating order: every parent has a larger index than its child
    let mut w = csv::Writer::from_path(dir.join("ordering.csv"))?;
    w.write_record(["node"])?;
    for name in &names {
        w.write_record([name])?;
    }
    w.flush()?;
    Ok(())
}
