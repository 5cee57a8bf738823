use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use qdagx::exec::{sub_seed, Execution};
use qdagx::graph::{kendall_tau, misspecify_order, NodeOrdering};
use qdagx::model::SplineSettings;
use qdagx::quantile_loss::QuantileLevel;
use qdagx::sampler::archive::write_archive;
use qdagx::sampler::{run_chain_with, Mode, SamplerConfig};
use qdagx::splines::DEFAULT_NUM_BASIS;

use super::write_json;
use crate::fitdir::{load_data, resolve_zscore, tau_dir_name, FitInfo, ZScore, FIT_INFO_FILE};
use crate::manifest::sha256_file;
use crate::table::read_column_map;
use crate::{invalid, RunContext};

/// Stream of the run seed reserved for the ordering shuffle.
const ORDERING_STREAM: u64 = u64::MAX;

#[derive(Args, Debug, Serialize)]
pub struct FitArgs {
    /// Responses: id column, then one column per node.
    #[arg(long)]
    pub y: PathBuf,
    /// Covariates: id column, then one column per covariate.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Quantile level; repeat for several. Defaults to 0.1, ..., 0.9.
    #[arg(long = "tau")]
    pub taus: Vec<f64>,
    #[arg(long, default_value = "qdagx")]
    pub mode: Mode,
    /// Node names, children first, in a column named `node`.
    #[arg(long)]
    pub ordering_file: Option<PathBuf>,
    /// Target Kendall correlation of the misspecified ordering.
    #[arg(long)]
    pub kendall_target: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ZScore::Auto)]
    pub zscore: ZScore,
    #[arg(long, default_value_t = DEFAULT_NUM_BASIS)]
    pub num_basis: usize,
    #[arg(long)]
    pub sigma_m: Option<f64>,
    #[arg(long)]
    pub sigma_mu: Option<f64>,
    /// Gamma shape of the threshold prior.
    #[arg(long)]
    pub prior_a: Option<f64>,
    /// Gamma rate of the threshold prior.
    #[arg(long)]
    pub prior_b: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

fn read_ordering(path: &Path, names: &[String]) -> Result<NodeOrdering> {
    let rows = read_column_map(path, "node", None)?;
    let order = rows
        .iter()
        .map(|(name, _)| {
            names.iter().position(|n| n == name).ok_or_else(|| invalid(format!("unknown node {name:?} in ordering")))
        })
        .collect::<Result<Vec<usize>>>()?;
    if order.len() != names.len() {
        return Err(invalid(format!("ordering lists {} nodes, data have {}", order.len(), names.len())));
    }
    NodeOrdering::new(order).with_context(|| format!("reading {}", path.display()))
}

fn level_seed(seed: u64, tau: f64) -> u64 {
    sub_seed(seed, (tau * 1e6).round() as u64)
}

pub fn run(args: &FitArgs, ctx: &mut RunContext) -> Result<()> {
    let mut taus = if args.taus.is_empty() {
        QuantileLevel::grid().into_iter().map(f64::from).collect()
    } else {
        args.taus.clone()
    };
    let levels = taus.iter().map(|&t| QuantileLevel::new(t)).collect::<qdagx::Result<Vec<_>>>()?;
    taus.sort_by(f64::total_cmp);
    if taus.windows(2).any(|w| w[0] == w[1]) {
        return Err(invalid("repeated --tau value"));
    }

    ctx.input(&args.y)?;
    if let Some(x) = &args.x {
        ctx.input(x)?;
    }
    let zscore = resolve_zscore(args.zscore, args.x.as_deref());
    let splines = SplineSettings { num_basis: args.num_basis, ..Default::default() };
    let loaded = load_data(&args.y, args.x.as_deref(), zscore, splines)?;
    let names = loaded.y.names.clone();
    let p = names.len();

    let mut cfg = SamplerConfig::new(args.mode).with_seed(args.seed);
    cfg = cfg.clone().with_schedule(
        args.iters.unwrap_or(cfg.iters),
        args.burnin.unwrap_or(cfg.burnin),
        args.thin.unwrap_or(cfg.thin),
    );
    if let Some(v) = args.sigma_m {
        cfg.hyper.sigma_m = v;
    }
    if let Some(v) = args.sigma_mu {
        cfg.hyper.sigma_mu = v;
    }
    if let Some(v) = args.prior_a {
        cfg.hyper.a = v;
    }
    if let Some(v) = args.prior_b {
        cfg.hyper.b = v;
    }

    let given = match &args.ordering_file {
        Some(path) => {
            ctx.input(path)?;
            Some(read_ordering(path, &names)?)
        }
        None => None,
    };
    let mut kendall = None;
    let ordering = match (args.mode, given, args.kendall_target) {
        (Mode::Qdagx, None, None) => None,
        (Mode::Qdagx, _, _) => {
            return Err(invalid("qdagx mode learns the ordering; drop --ordering-file and --kendall-target"))
        }
        (Mode::Oracle, Some(o), None) => Some(o),
        (Mode::Oracle, None, _) => return Err(invalid("oracle mode requires --ordering-file")),
        (Mode::Oracle, Some(_), Some(_)) => return Err(invalid("--kendall-target applies to misspecified mode only")),
        (Mode::Misspecified, _, None) => return Err(invalid("misspecified mode requires --kendall-target")),
        (Mode::Misspecified, reference, Some(target)) => {
            // without a file the reference is the column order of the responses
            let reference = reference.unwrap_or_else(|| NodeOrdering::identity(p));
            let o = misspecify_order(&reference, target, sub_seed(args.seed, ORDERING_STREAM))?;
            kendall = Some(kendall_tau(&reference, &o)?);
            Some(o)
        }
    };
    if let Some(o) = ordering.clone() {
        cfg = cfg.with_ordering(o);
    }
    cfg.validate(p)?;

    ctx.seed = Some(args.seed);
    ctx.resolve("zscore", zscore)?;
    ctx.resolve("schedule", [cfg.iters, cfg.burnin, cfg.thin])?;
    ctx.resolve("hyper", cfg.hyper)?;
    let ordering_names: Option<Vec<String>> =
        ordering.as_ref().map(|o| o.as_slice().iter().map(|&h| names[h].clone()).collect());
    ctx.resolve("ordering", &ordering_names)?;
    ctx.resolve("kendall_tau", kendall)?;

    let data = &loaded.data;
    let runs = Execution::Parallel.map(levels, |level| {
        let cfg = cfg.clone().with_seed(level_seed(args.seed, level.value()));
        run_chain_with(data, level, &cfg, Execution::Parallel)
    });
    for draws in runs {
        let draws = draws?;
        write_archive(&args.out.join(tau_dir_name(draws.tau.value())), &draws)?;
    }

    if let Some(names) = &ordering_names {
        let mut w = csv::Writer::from_path(args.out.join("ordering.csv"))?;
        w.write_record(["node"])?;
        for n in names {
            w.write_record([n])?;
        }
        w.flush()?;
    }
    let abs = |p: &Path| std::fs::canonicalize(p).with_context(|| format!("resolving {}", p.display()));
    let info = FitInfo {
        mode: args.mode,
        y: abs(&args.y)?,
        y_sha256: sha256_file(&args.y)?,
        x: args.x.as_deref().map(abs).transpose()?,
        x_sha256: args.x.as_deref().map(sha256_file).transpose()?,
        zscore,
        splines,
        ids: loaded.y.ids.clone(),
        node_names: names,
        covariate_names: loaded.x_names.clone(),
        taus,
        ordering: ordering_names,
        kendall_tau: kendall,
    };
    write_json(&args.out.join(FIT_INFO_FILE), &info)
}
