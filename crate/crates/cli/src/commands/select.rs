use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use qdagx::exec::Execution;
use qdagx::metrics::{covariate_truth, edge_truth};
use qdagx::selection::{
    covariate_posterior_probs, edge_posterior_probs, select_covariates, select_edges, NodeSelection, DEFAULT_FDR,
};

use super::write_json;
use crate::fitdir::{load_truth, FitDir};
use crate::{invalid, RunContext};

#[derive(Args, Debug, Serialize)]
pub struct SelectArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Target false discovery rate.
    #[arg(long, default_value_t = DEFAULT_FDR)]
    pub fdr: f64,
    /// Simulated bundle; with it the realized FDR is controlled, without it
    /// the Bayesian FDR.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct NodeCutoff<'a> {
    node: &'a str,
    threshold: Option<f64>,
    achieved_fdr: Option<f64>,
}

#[derive(Serialize)]
struct LevelSummary<'a> {
    tau: f64,
    edges: Vec<NodeCutoff<'a>>,
    covariates: Vec<NodeCutoff<'a>>,
}

#[derive(Serialize)]
struct Summary<'a> {
    fdr: f64,
    control: &'static str,
    levels: Vec<LevelSummary<'a>>,
}

fn cutoffs<'a, A>(sel: &NodeSelection<A>, names: &'a [String]) -> Vec<NodeCutoff<'a>> {
    let finite = |v: f64| v.is_finite().then_some(v);
    names
        .iter()
        .enumerate()
        .map(|(h, node)| NodeCutoff {
            node,
            threshold: finite(sel.thresholds[h]),
            achieved_fdr: finite(sel.achieved_fdr[h]),
        })
        .collect()
}

pub fn run(args: &SelectArgs, ctx: &mut RunContext) -> Result<()> {
    if !(args.fdr > 0.0 && args.fdr < 1.0) {
        return Err(invalid(format!("--fdr must lie in (0, 1), got {}", args.fdr)));
    }
    let fit = FitDir::open(&args.fit, ctx)?;
    let truth = args.truth.as_deref().map(|b| load_truth(b, &fit, ctx)).transpose()?;
    let names = &fit.info.node_names;
    let x_names = &fit.info.covariate_names;
    let mut levels = Vec::new();
    for &tau in &fit.info.taus {
        let draws = fit.draws(tau)?;
        let e_post = edge_posterior_probs(&draws, &fit.data, Execution::Parallel)?;
        let x_post = covariate_posterior_probs(&draws)?;
        let (e_truth, x_truth) = match &truth {
            Some(t) => {
                let idx = t
                    .tau_index(tau)
                    .ok_or_else(|| invalid(format!("level {tau} is not on the truth grid")))?;
                (Some(edge_truth(t, idx)), Some(covariate_truth(t)))
            }
            None => (None, None),
        };
        let e_sel = select_edges(&e_post, e_truth.as_ref(), args.fdr)?;
        let x_sel = select_covariates(&x_post, x_truth.as_ref(), args.fdr)?;

        let mut w = csv::Writer::from_path(args.out.join(format!("edges_tau_{tau}.csv")))?;
        w.write_record(["id", "child", "parent", "prob", "selected"])?;
        let (n, p, _) = e_post.probs.dim();
        for i in 0..n {
            for h in 0..p {
                for j in (0..p).filter(|&j| j != h) {
                    w.write_record([
                        fit.info.ids[i].as_str(),
                        &names[h],
                        &names[j],
                        &e_post.probs[[i, h, j]].to_string(),
                        if e_sel.selected[[i, h, j]] { "1" } else { "0" },
                    ])?;
                }
            }
        }
        w.flush()?;

        let mut w = csv::Writer::from_path(args.out.join(format!("covariates_tau_{tau}.csv")))?;
        w.write_record(["child", "parent", "covariate", "prob", "linear", "nonlinear", "selected"])?;
        for h in 0..p {
            for j in (0..p).filter(|&j| j != h) {
                for (k, xk) in x_names.iter().enumerate() {
                    w.write_record([
                        names[h].as_str(),
                        &names[j],
                        xk,
                        &x_post.probs[[h, j, k]].to_string(),
                        &x_post.linear[[h, j, k]].to_string(),
                        &x_post.nonlinear[[h, j, k]].to_string(),
                        if x_sel.selected[[h, j, k]] { "1" } else { "0" },
                    ])?;
                }
            }
        }
        w.flush()?;
        levels.push(LevelSummary { tau, edges: cutoffs(&e_sel, names), covariates: cutoffs(&x_sel, names) });
    }
    let control = if truth.is_some() { "realized" } else { "bayesian" };
    write_json(&args.out.join("selection.json"), &Summary { fdr: args.fdr, control, levels })
}
