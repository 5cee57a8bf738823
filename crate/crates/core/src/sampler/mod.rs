//! Metropolis-within-Gibbs sampler for quantile DAGs in three modes:
//! known ordering, unknown ordering with the union-acyclicity constraint,
//! and a deliberately misspecified ordering.
//!
//! Under a known (or assumed) ordering the working likelihood factorizes
//! over nodes, so each node runs its own chain and node chains run in
//! parallel. Without an ordering a single chain covers all ordered pairs.

pub mod archive;
mod chain;
pub mod geweke;
pub mod gibbs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};
use crate::exec::{sub_seed, Execution};
use crate::graph::{Adjacency, IndividualDagSet, NodeOrdering};
use crate::model::{EdgeKey, ModelData};
use crate::prior::{EdgeParamBlock, PriorHyper};
use crate::quantile_loss::{total_check_loss, QuantileLevel};

pub use gibbs::{
    adapt_threshold_step, gibbs_c, gibbs_l2, gibbs_m, gibbs_t2, gibbs_zeta, prob_m_positive, Mutation,
};

pub(crate) use chain::{Chain, Steps};

/// Iterations between threshold step-size adjustments during burn-in.
pub const ADAPT_WINDOW: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Oracle,
    Qdagx,
    Misspecified,
}

impl Mode {
    pub fn needs_ordering(self) -> bool {
        !matches!(self, Mode::Qdagx)
    }
}

impl std::str::FromStr for Mode {
    type Err = QdagError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(Mode::Oracle),
            "qdagx" => Ok(Mode::Qdagx),
            "misspecified" => Ok(Mode::Misspecified),
            other => Err(QdagError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Oracle => "oracle",
            Mode::Qdagx => "qdagx",
            Mode::Misspecified => "misspecified",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub step_eta: f64,
    pub step_xi: f64,
    pub step_mu: f64,
    pub step_t_base: f64,
    pub step_t_exponent_range: (i32, i32),
    pub seed: u64,
    pub mode: Mode,
    /// Children first; node `h` may only have parents ranked after it.
    pub ordering: Option<NodeOrdering>,
    pub hyper: PriorHyper,
}

impl SamplerConfig {
    /// Default schedule and step sizes for `mode`.
    pub fn new(mode: Mode) -> Self {
        let (iters, burnin) = match mode {
            Mode::Qdagx => (5_000, 2_500),
            Mode::Oracle | Mode::Misspecified => (20_000, 10_000),
        };
        Self {
            iters,
            burnin,
            thin: 10,
            step_eta: 0.1,
            step_xi: 0.1,
            step_mu: 0.5,
            step_t_base: 0.1,
            step_t_exponent_range: (-4, 4),
            seed: 0,
            mode,
            ordering: None,
            hyper: PriorHyper::default(),
        }
    }

    pub fn with_schedule(mut self, iters: usize, burnin: usize, thin: usize) -> Self {
        self.iters = iters;
        self.burnin = burnin;
        self.thin = thin;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_ordering(mut self, ordering: NodeOrdering) -> Self {
        self.ordering = Some(ordering);
        self
    }

    pub fn n_draws(&self) -> usize {
        (self.iters - self.burnin) / self.thin
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let bad = |m: String| Err(QdagError::Config(m));
        if self.burnin >= self.iters {
            return bad(format!("burn-in {} must be below iterations {}", self.burnin, self.iters));
        }
        if self.thin == 0 {
            return bad("thinning must be at least 1".into());
        }
        let steps = [self.step_eta, self.step_xi, self.step_mu, self.step_t_base];
        if !steps.iter().all(|s| s.is_finite() && *s > 0.0) {
            return bad(format!("step sizes must be positive: {steps:?}"));
        }
        let (lo, hi) = self.step_t_exponent_range;
        if lo > hi {
            return bad(format!("empty threshold exponent range {lo}..{hi}"));
        }
        self.hyper.validate()?;
        match (&self.ordering, self.mode.needs_ordering()) {
            (None, true) => bad(format!("mode {} requires a node ordering", self.mode)),
            (Some(o), _) if o.len() != p => bad(format!("ordering has {} nodes, data have {p}", o.len())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub accepted: u64,
    pub proposed: u64,
}

impl Counter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
    }

    pub fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }

    fn merge(&mut self, other: &Counter) {
        self.accepted += other.accepted;
        self.proposed += other.proposed;
    }
}

/// Post-burn-in Metropolis acceptance counts per parameter family.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptCounts {
    pub eta: Counter,
    pub xi: Counter,
    pub mu: Counter,
    pub t: Counter,
}

impl AcceptCounts {
    fn merge(&mut self, other: &AcceptCounts) {
        self.eta.merge(&other.eta);
        self.xi.merge(&other.xi);
        self.mu.merge(&other.mu);
        self.t.merge(&other.t);
    }
}

/// One thinned state: parameters of every term (aligned with
/// `PosteriorDraws::terms`), the union graph and the cached node
/// log-likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileDagDraw {
    pub params: Vec<EdgeParamBlock>,
    pub union: Adjacency,
    pub node_loglik: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub tau: QuantileLevel,
    pub config: SamplerConfig,
    /// Sorted by child, then parent, with the intercept first.
    pub terms: Vec<EdgeKey>,
    pub draws: Vec<QuantileDagDraw>,
    pub acceptance: AcceptCounts,
    pub p: usize,
    pub reduced_dims: Vec<usize>,
}

impl PosteriorDraws {
    pub fn term_index(&self, key: EdgeKey) -> Option<usize> {
        self.terms.binary_search(&key).ok()
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Per-individual graphs of draw `d`, recomputed from its parameters.
    pub fn dag_set(&self, data: &ModelData, d: usize) -> Result<IndividualDagSet> {
        let n = data.n();
        let mut per_individual = vec![Adjacency::empty(self.p); n];
        let mut union = Adjacency::empty(self.p);
        for (key, params) in self.terms.iter().zip(&self.draws[d].params) {
            let Some(j) = key.parent else { continue };
            let beta = data.coefficient(*key, params)?;
            for (i, b) in beta.iter().enumerate() {
                if *b != 0.0 {
                    per_individual[i].set(key.child, j, true)?;
                    union.set(key.child, j, true)?;
                }
            }
        }
        Ok(IndividualDagSet { per_individual, union })
    }

    /// Node log-likelihoods of draw `d` recomputed from its parameters.
    pub fn recompute_node_loglik(&self, data: &ModelData, d: usize) -> Result<Vec<f64>> {
        let n = data.n();
        let mut fitted = vec![vec![0.0; n]; self.p];
        for (key, params) in self.terms.iter().zip(&self.draws[d].params) {
            let beta = data.coefficient(*key, params)?;
            let f = &mut fitted[key.child];
            match key.parent {
                None => f.iter_mut().zip(&beta).for_each(|(a, b)| *a += b),
                Some(j) => (0..n).for_each(|i| f[i] += data.y[[i, j]] * beta[i]),
            }
        }
        Ok((0..self.p)
            .map(|h| n as f64 * self.tau.log_norm() - total_check_loss(data.y.column(h), &fitted[h], self.tau))
            .collect())
    }

    /// Posterior means of `μ`, `α* = ηξ`, `α⁰ = η⁰ξ⁰` and `t` for one term,
    /// packed into a parameter block whose `η` are 1 and `ξ` carry the means.
    pub fn mean_params(&self, term: usize) -> Result<EdgeParamBlock> {
        if self.draws.is_empty() {
            return Err(QdagError::EmptyArchive);
        }
        let first = &self.draws[0].params[term];
        let mut out = EdgeParamBlock::initial(&first.reduced_dims(), 0.0);
        for g in [&mut out.nonlinear, &mut out.linear] {
            g.blocks.iter_mut().for_each(|b| {
                b.eta = 1.0;
                b.xi.iter_mut().for_each(|x| *x = 0.0);
            });
        }
        let w = 1.0 / self.draws.len() as f64;
        for draw in &self.draws {
            let p = &draw.params[term];
            out.mu += w * p.mu;
            out.threshold += w * p.threshold;
            for (dst, src) in [(&mut out.nonlinear, &p.nonlinear), (&mut out.linear, &p.linear)] {
                for (bd, bs) in dst.blocks.iter_mut().zip(&src.blocks) {
                    for (xd, a) in bd.xi.iter_mut().zip(bs.coefficients()) {
                        *xd += w * a;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Node-to-candidate-parents layout of the chain(s) for a configuration.
fn layout(cfg: &SamplerConfig, p: usize) -> Vec<(usize, Vec<usize>)> {
    match &cfg.ordering {
        Some(order) if cfg.mode.needs_ordering() => {
            let pos = order.positions();
            (0..p)
                .map(|h| (h, (0..p).filter(|&j| pos[j] > pos[h]).collect()))
                .collect()
        }
        _ => (0..p).map(|h| (h, (0..p).filter(|&j| j != h).collect())).collect(),
    }
}

struct ChainOutput {
    params: Vec<Vec<EdgeParamBlock>>,
    unions: Vec<Adjacency>,
    logliks: Vec<Vec<(usize, f64)>>,
    keys: Vec<EdgeKey>,
    counts: AcceptCounts,
}

fn drive(
    data: &ModelData,
    tau: QuantileLevel,
    cfg: &SamplerConfig,
    nodes: &[(usize, Vec<usize>)],
    enforce_dag: bool,
    seed: u64,
) -> ChainOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chain = Chain::initial(data, tau, cfg.hyper, Steps::from_config(cfg), enforce_dag, nodes, &mut rng);
    let mut out = ChainOutput {
        params: Vec::with_capacity(cfg.n_draws()),
        unions: Vec::with_capacity(cfg.n_draws()),
        logliks: Vec::with_capacity(cfg.n_draws()),
        keys: chain.params().map(|(k, _)| k).collect(),
        counts: AcceptCounts::default(),
    };
    for it in 1..=cfg.iters {
        chain.sweep(&mut rng);
        if it <= cfg.burnin {
            if it % ADAPT_WINDOW == 0 {
                chain.adapt();
            }
            if it == cfg.burnin {
                chain.counts = AcceptCounts::default();
            }
        } else if (it - cfg.burnin).is_multiple_of(cfg.thin) {
            out.params.push(chain.params().map(|(_, p)| p.clone()).collect());
            out.unions.push(chain.union().clone());
            out.logliks.push(chain.node_logliks());
        }
    }
    out.counts = chain.counts;
    out
}

pub fn run_chain(data: &ModelData, tau: QuantileLevel, cfg: &SamplerConfig) -> Result<PosteriorDraws> {
    run_chain_with(data, tau, cfg, Execution::default())
}

/// Runs the sampler. Node chains of the factorized modes are distributed
/// according to `exec`; results are identical for every execution mode.
pub fn run_chain_with(
    data: &ModelData,
    tau: QuantileLevel,
    cfg: &SamplerConfig,
    exec: Execution,
) -> Result<PosteriorDraws> {
    let p = data.p();
    cfg.validate(p)?;
    let nodes = layout(cfg, p);
    let outputs: Vec<ChainOutput> = if cfg.mode.needs_ordering() {
        exec.map(nodes, |node| {
            let seed = sub_seed(cfg.seed, node.0 as u64 + 1);
            drive(data, tau, cfg, std::slice::from_ref(&node), false, seed)
        })
    } else {
        vec![drive(data, tau, cfg, &nodes, true, sub_seed(cfg.seed, 0))]
    };

    let n_draws = cfg.n_draws();
    let mut terms = Vec::new();
    let mut acceptance = AcceptCounts::default();
    for o in &outputs {
        terms.extend_from_slice(&o.keys);
        acceptance.merge(&o.counts);
    }
    let mut draws = Vec::with_capacity(n_draws);
    for d in 0..n_draws {
        let mut params = Vec::with_capacity(terms.len());
        let mut union = Adjacency::empty(p);
        let mut node_loglik = vec![0.0; p];
        for o in &outputs {
            params.extend(o.params[d].iter().cloned());
            union.union_with(&o.unions[d]);
            for &(h, ll) in &o.logliks[d] {
                node_loglik[h] = ll;
            }
        }
        draws.push(QuantileDagDraw { params, union, node_loglik });
    }
    Ok(PosteriorDraws { tau, config: cfg.clone(), terms, draws, acceptance, p, reduced_dims: data.reduced_dims() })
}
