use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use qdagx::aggregate::{
    aggregate_dags, edge_prevalence, hub_rank, representatives, Degree, DEFAULT_HUB_MIN_QUANTILES, DEFAULT_HUB_TOP_K,
    DEFAULT_PATIENT_FRAC, DEFAULT_PREVALENCE_MIN_QUANTILES,
};
use qdagx::exec::Execution;

use super::write_json;
use crate::fitdir::FitDir;
use crate::table::read_column_map;
use crate::{invalid, RunContext};

#[derive(Args, Debug, Serialize)]
pub struct AggregateArgs {
    /// Output directory of `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Degree used to rank hubs: `in` (parents) or `out` (children).
    #[arg(long, default_value = "in")]
    pub degree: Degree,
    #[arg(long, default_value_t = DEFAULT_HUB_TOP_K)]
    pub top_k: usize,
    /// Levels at which a node must rank in the top k to count as a hub.
    #[arg(long, default_value_t = DEFAULT_HUB_MIN_QUANTILES)]
    pub hub_min_quantiles: usize,
    /// Share of individuals an edge needs at one level.
    #[arg(long, default_value_t = DEFAULT_PATIENT_FRAC)]
    pub patient_frac: f64,
    /// Levels at which an edge must reach the individual share.
    #[arg(long, default_value_t = DEFAULT_PREVALENCE_MIN_QUANTILES)]
    pub prevalence_min_quantiles: usize,
    /// Optional node-to-group labels (columns `node`, `group`).
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Hub<'a> {
    node: &'a str,
    group: Option<&'a str>,
    appearances: usize,
    degree_sum: f64,
}

#[derive(Serialize)]
struct Prevalent<'a> {
    child: &'a str,
    parent: &'a str,
    taus: Vec<f64>,
}

#[derive(Serialize)]
struct Report<'a> {
    degree: Degree,
    hubs: Vec<Hub<'a>>,
    prevalent_edges: Vec<Prevalent<'a>>,
    groups: &'a BTreeMap<String, String>,
}

pub fn run(args: &AggregateArgs, ctx: &mut RunContext) -> Result<()> {
    if !(args.patient_frac > 0.0 && args.patient_frac <= 1.0) {
        return Err(invalid(format!("--patient-frac must lie in (0, 1], got {}", args.patient_frac)));
    }
    let fit = FitDir::open(&args.fit, ctx)?;
    let names = &fit.info.node_names;
    let groups: BTreeMap<String, String> = match &args.groups {
        Some(path) => {
            ctx.input(path)?;
            let rows = read_column_map(path, "node", Some("group"))?;
            if let Some((bad, _)) = rows.iter().find(|(n, _)| !names.contains(n)) {
                return Err(invalid(format!("unknown node {bad:?} in {}", path.display())));
            }
            rows.into_iter().collect()
        }
        None => BTreeMap::new(),
    };

    let mut aggs = Vec::new();
    for &tau in &fit.info.taus {
        let draws = fit.draws(tau)?;
        let reps = representatives(&draws, &fit.data, Execution::Parallel)?;
        let mut w = csv::Writer::from_path(args.out.join(format!("representatives_tau_{tau}.csv")))?;
        w.write_record(["id", "draw"])?;
        for (id, (d, _)) in fit.info.ids.iter().zip(&reps) {
            w.write_record([id.as_str(), &d.to_string()])?;
        }
        w.flush()?;

        let adjs: Vec<_> = reps.into_iter().map(|(_, a)| a).collect();
        let agg = aggregate_dags(tau, &adjs)?;
        let mut w = csv::Writer::from_path(args.out.join(format!("weights_tau_{tau}.csv")))?;
        let mut header = vec!["child".to_string()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for (h, row) in agg.weights.rows().into_iter().enumerate() {
            let mut rec = vec![names[h].clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        aggs.push(agg);
    }

    let group_of = |v: usize| groups.get(&names[v]).map(String::as_str);
    let hubs = hub_rank(&aggs, args.degree, args.top_k, args.hub_min_quantiles)
        .into_iter()
        .map(|e| Hub { node: &names[e.node], group: group_of(e.node), appearances: e.appearances, degree_sum: e.degree_sum })
        .collect();
    let prevalent_edges = edge_prevalence(&aggs, args.patient_frac, args.prevalence_min_quantiles)
        .into_iter()
        .map(|e| Prevalent { child: &names[e.child], parent: &names[e.parent], taus: e.taus })
        .collect();
    write_json(&args.out.join("report.json"), &Report { degree: args.degree, hubs, prevalent_edges, groups: &groups })
}
