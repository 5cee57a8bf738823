//! One Markov chain over a set of nodes and their coefficient functions.
//!
//! Per coefficient function the chain caches `θ`, `β`, the direction vectors
//! `X*_k ξ_k` and the number of individuals with a nonzero `β`; per node it
//! caches the fitted quantiles and the summed check loss. Caches are rebuilt
//! exactly from the parameters at the start of every sweep and updated
//! incrementally within the sweep.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use super::gibbs::{
    adapt_threshold_step, gibbs_c_scaled, gibbs_l2_scaled, gibbs_m, gibbs_t2_scaled, gibbs_zeta_scaled, Mutation,
};
use super::{AcceptCounts, SamplerConfig};
use crate::graph::{is_acyclic, Adjacency};
use crate::model::{EdgeKey, ModelData};
use crate::prior::{normal, threshold_value, EdgeParamBlock, PriorHyper, PxhsGroup};
use crate::quantile_loss::{check_loss, QuantileLevel};

/// Which horseshoe group of an edge function an update touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Group {
    Nonlinear,
    Linear,
}

#[derive(Debug, Clone)]
pub(crate) struct TermState {
    pub key: EdgeKey,
    slot: usize,
    pub params: EdgeParamBlock,
    theta: Vec<f64>,
    beta: Vec<f64>,
    active: usize,
    nl_dir: Vec<Vec<f64>>,
}

impl TermState {
    fn group(&self, g: Group) -> &PxhsGroup {
        match g {
            Group::Nonlinear => &self.params.nonlinear,
            Group::Linear => &self.params.linear,
        }
    }

    fn group_mut(&mut self, g: Group) -> &mut PxhsGroup {
        match g {
            Group::Nonlinear => &mut self.params.nonlinear,
            Group::Linear => &mut self.params.linear,
        }
    }
}

#[derive(Debug, Clone)]
struct NodeSlot {
    h: usize,
    fitted: Vec<f64>,
    loss: f64,
    terms: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Steps {
    pub eta: f64,
    pub xi: f64,
    pub mu: f64,
    pub t_base: f64,
    pub z_range: (i32, i32),
}

impl Steps {
    pub fn from_config(cfg: &SamplerConfig) -> Self {
        Self {
            eta: cfg.step_eta,
            xi: cfg.step_xi,
            mu: cfg.step_mu,
            t_base: cfg.step_t_base,
            z_range: cfg.step_t_exponent_range,
        }
    }
}

pub(crate) struct Chain<'a> {
    data: &'a ModelData,
    tau: QuantileLevel,
    hyper: PriorHyper,
    steps: Steps,
    z: i32,
    enforce_dag: bool,
    pub mutation: Option<Mutation>,
    pub terms: Vec<TermState>,
    slots: Vec<NodeSlot>,
    union: Adjacency,
    pub counts: AcceptCounts,
    window: (u64, u64),
    buf_theta: Vec<f64>,
    buf_beta: Vec<f64>,
    buf_delta: Vec<f64>,
    buf_dir: Vec<f64>,
}

impl<'a> Chain<'a> {
    /// Builds a chain for `nodes`, where node `h` regresses on
    /// `candidates[i]` for `nodes[i] = h`, starting from `params` (one block
    /// per term, terms ordered as intercept then candidate parents).
    pub fn new(
        data: &'a ModelData,
        tau: QuantileLevel,
        hyper: PriorHyper,
        steps: Steps,
        enforce_dag: bool,
        nodes: &[(usize, Vec<usize>)],
        mut params: impl FnMut(EdgeKey) -> EdgeParamBlock,
    ) -> Self {
        let n = data.n();
        let mut terms = Vec::new();
        let mut slots = Vec::new();
        for (slot, (h, parents)) in nodes.iter().enumerate() {
            let mut idx = Vec::with_capacity(parents.len() + 1);
            let keys = std::iter::once(EdgeKey::intercept(*h)).chain(parents.iter().map(|&j| EdgeKey::edge(*h, j)));
            for key in keys {
                idx.push(terms.len());
                terms.push(TermState {
                    key,
                    slot,
                    params: params(key),
                    theta: vec![0.0; n],
                    beta: vec![0.0; n],
                    active: 0,
                    nl_dir: Vec::new(),
                });
            }
            slots.push(NodeSlot { h: *h, fitted: vec![0.0; n], loss: 0.0, terms: idx });
        }
        let mut chain = Self {
            data,
            tau,
            hyper,
            steps,
            z: 0i32.clamp(steps.z_range.0, steps.z_range.1),
            enforce_dag,
            mutation: None,
            terms,
            slots,
            union: Adjacency::empty(data.p()),
            counts: AcceptCounts::default(),
            window: (0, 0),
            buf_theta: vec![0.0; n],
            buf_beta: vec![0.0; n],
            buf_delta: vec![0.0; n],
            buf_dir: vec![0.0; n],
        };
        chain.resync();
        chain
    }

    /// Sampler start: `μ = 0`, `η = 0.01`, `ξ = m = 1`, unit scales and a
    /// threshold drawn from its prior, raised if needed so that the chain
    /// begins from the empty graph.
    pub fn initial(
        data: &'a ModelData,
        tau: QuantileLevel,
        hyper: PriorHyper,
        steps: Steps,
        enforce_dag: bool,
        nodes: &[(usize, Vec<usize>)],
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let dims = data.reduced_dims();
        let gamma = Gamma::new(hyper.a, 1.0 / hyper.b).expect("validated prior");
        let mut chain = Self::new(data, tau, hyper, steps, enforce_dag, nodes, |key| {
            let t = if key.is_intercept() { 0.0 } else { gamma.sample(rng) };
            EdgeParamBlock::initial(&dims, t)
        });
        for term in chain.terms.iter_mut().filter(|t| !t.key.is_intercept()) {
            let max_abs = term.theta.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if term.params.threshold <= max_abs {
                term.params.threshold = 1.01 * max_abs;
            }
        }
        chain.resync();
        chain
    }

    /// Recomputes every cache from the parameters.
    pub fn resync(&mut self) {
        let data = self.data;
        let n = data.n();
        for term in &mut self.terms {
            let p = &term.params;
            term.nl_dir = data
                .bases
                .iter()
                .zip(&p.nonlinear.blocks)
                .map(|(basis, block)| {
                    (0..n)
                        .map(|i| basis.design_reduced.row(i).iter().zip(&block.xi).map(|(x, v)| x * v).sum())
                        .collect()
                })
                .collect();
            for i in 0..n {
                let mut th = p.mu;
                for (k, dir) in term.nl_dir.iter().enumerate() {
                    th += p.nonlinear.blocks[k].eta * dir[i];
                    th += p.linear.blocks[k].eta * data.x[[i, k]] * p.linear.blocks[k].xi[0];
                }
                term.theta[i] = th;
                term.beta[i] = if term.key.is_intercept() { th } else { threshold_value(th, p.threshold) };
            }
            term.active = term.beta.iter().filter(|b| **b != 0.0).count();
        }
        let mut union = Adjacency::empty(data.p());
        for term in &self.terms {
            if let Some(j) = term.key.parent {
                if term.active > 0 {
                    union.set(term.key.child, j, true).expect("valid edge");
                }
            }
        }
        debug_assert!(!self.enforce_dag || is_acyclic(&union));
        self.union = union;
        for slot in &mut self.slots {
            slot.fitted.iter_mut().for_each(|f| *f = 0.0);
            for &e in &slot.terms {
                let term = &self.terms[e];
                match term.key.parent {
                    None => slot.fitted.iter_mut().zip(&term.beta).for_each(|(f, b)| *f += b),
                    Some(j) => {
                        for i in 0..n {
                            slot.fitted[i] += data.y[[i, j]] * term.beta[i];
                        }
                    }
                }
            }
            let y = data.y.column(slot.h);
            slot.loss = y.iter().zip(&slot.fitted).map(|(yi, fi)| check_loss(yi - fi, self.tau)).sum();
        }
    }

    pub fn union(&self) -> &Adjacency {
        &self.union
    }

    /// Cached working log-likelihood of each node handled by this chain.
    pub fn node_logliks(&self) -> Vec<(usize, f64)> {
        let n = self.data.n() as f64;
        self.slots.iter().map(|s| (s.h, n * self.tau.log_norm() - s.loss)).collect()
    }

    /// Scores `buf_theta` (with `threshold`) as a replacement for term `e`
    /// and accepts or rejects it. On acceptance all caches of the term, its
    /// node and the union graph are updated.
    fn propose(&mut self, e: usize, threshold: f64, log_prior_delta: f64, rng: &mut ChaCha8Rng) -> bool {
        let data = self.data;
        let term = &self.terms[e];
        let slot = &self.slots[term.slot];
        let intercept = term.key.is_intercept();
        let mut active = 0usize;
        let mut changed = false;
        for i in 0..data.n() {
            let th = self.buf_theta[i];
            let b = if intercept { th } else { threshold_value(th, threshold) };
            if b != 0.0 {
                active += 1;
            }
            self.buf_beta[i] = b;
            let diff = b - term.beta[i];
            let d = match term.key.parent {
                None => diff,
                Some(j) => {
                    if diff == 0.0 {
                        0.0
                    } else {
                        diff * data.y[[i, j]]
                    }
                }
            };
            if d != 0.0 {
                changed = true;
            }
            self.buf_delta[i] = d;
        }
        let turns_on = term.active == 0 && active > 0;
        if let (Some(j), true, true) = (term.key.parent, turns_on, self.enforce_dag) {
            let mut trial = self.union.clone();
            trial.set(term.key.child, j, true).expect("valid edge");
            if !is_acyclic(&trial) {
                return false;
            }
        }
        let new_loss = if changed {
            let y = data.y.column(slot.h);
            let mut s = 0.0;
            for i in 0..data.n() {
                s += check_loss(y[i] - slot.fitted[i] - self.buf_delta[i], self.tau);
            }
            s
        } else {
            slot.loss
        };
        let log_ratio = slot.loss - new_loss + log_prior_delta;
        let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        if !accept {
            return false;
        }
        let term = &mut self.terms[e];
        std::mem::swap(&mut term.theta, &mut self.buf_theta);
        std::mem::swap(&mut term.beta, &mut self.buf_beta);
        let was_active = term.active > 0;
        term.active = active;
        if let Some(j) = term.key.parent {
            if was_active != (active > 0) {
                self.union.set(term.key.child, j, active > 0).expect("valid edge");
            }
        }
        let slot = &mut self.slots[term.slot];
        if changed {
            slot.fitted.iter_mut().zip(&self.buf_delta).for_each(|(f, d)| *f += d);
            slot.loss = new_loss;
        }
        true
    }

    fn step_eta(&mut self, e: usize, g: Group, k: usize, rng: &mut ChaCha8Rng) {
        let term = &self.terms[e];
        let group = term.group(g);
        let block = &group.blocks[k];
        let old = block.eta;
        let new = old + normal(self.steps.eta).sample(rng);
        let var = group.global2 * block.local2;
        let prior_delta = -0.5 * (new * new - old * old) / var;
        let d = new - old;
        match g {
            Group::Nonlinear => {
                for (b, (th, dir)) in self.buf_theta.iter_mut().zip(term.theta.iter().zip(&term.nl_dir[k])) {
                    *b = th + d * dir;
                }
            }
            Group::Linear => {
                let xi = block.xi[0];
                let x = self.data.x.column(k);
                for (i, b) in self.buf_theta.iter_mut().enumerate() {
                    *b = term.theta[i] + d * x[i] * xi;
                }
            }
        }
        let threshold = term.params.threshold;
        let accepted = self.propose(e, threshold, prior_delta, rng);
        self.counts.eta.record(accepted);
        if accepted {
            self.terms[e].group_mut(g).blocks[k].eta = new;
        }
    }

    fn step_xi(&mut self, e: usize, g: Group, k: usize, rng: &mut ChaCha8Rng) {
        let step = normal(self.steps.xi);
        let term = &self.terms[e];
        let block = &term.group(g).blocks[k];
        let new_xi: Vec<f64> = block.xi.iter().map(|x| x + step.sample(rng)).collect();
        let prior_delta = self.hyper.xi_logprior(&new_xi, &block.m) - self.hyper.xi_logprior(&block.xi, &block.m);
        let eta = block.eta;
        match g {
            Group::Nonlinear => {
                let basis = &self.data.bases[k];
                for i in 0..self.data.n() {
                    let dir: f64 = basis.design_reduced.row(i).iter().zip(&new_xi).map(|(x, v)| x * v).sum();
                    self.buf_dir[i] = dir;
                    self.buf_theta[i] = term.theta[i] + eta * (dir - term.nl_dir[k][i]);
                }
            }
            Group::Linear => {
                let d = new_xi[0] - block.xi[0];
                let x = self.data.x.column(k);
                for i in 0..self.data.n() {
                    self.buf_theta[i] = term.theta[i] + eta * x[i] * d;
                }
            }
        }
        let threshold = term.params.threshold;
        let accepted = self.propose(e, threshold, prior_delta, rng);
        self.counts.xi.record(accepted);
        if accepted {
            let term = &mut self.terms[e];
            if g == Group::Nonlinear {
                std::mem::swap(&mut term.nl_dir[k], &mut self.buf_dir);
            }
            term.group_mut(g).blocks[k].xi = new_xi;
        }
    }

    fn step_mu(&mut self, e: usize, rng: &mut ChaCha8Rng) {
        let term = &self.terms[e];
        let old = term.params.mu;
        let d = normal(self.steps.mu).sample(rng);
        let new = old + d;
        let prior_delta = self.hyper.mu_logprior(new) - self.hyper.mu_logprior(old);
        for (b, th) in self.buf_theta.iter_mut().zip(&term.theta) {
            *b = th + d;
        }
        let threshold = term.params.threshold;
        let accepted = self.propose(e, threshold, prior_delta, rng);
        self.counts.mu.record(accepted);
        if accepted {
            self.terms[e].params.mu = new;
        }
    }

    fn step_threshold(&mut self, e: usize, rng: &mut ChaCha8Rng) {
        let sd = self.steps.t_base * 2f64.powi(self.z);
        let term = &self.terms[e];
        let old = term.params.threshold;
        let new = old + normal(sd).sample(rng);
        self.window.1 += 1;
        let accepted = if new <= 0.0 {
            false
        } else {
            let prior_delta = self.hyper.threshold_logprior(new) - self.hyper.threshold_logprior(old);
            self.buf_theta.copy_from_slice(&term.theta);
            self.propose(e, new, prior_delta, rng)
        };
        self.counts.t.record(accepted);
        if accepted {
            self.window.0 += 1;
            self.terms[e].params.threshold = new;
        }
    }

    fn gibbs_scales(&mut self, e: usize, g: Group, rng: &mut ChaCha8Rng) {
        let mutation = self.mutation;
        let group = self.terms[e].group_mut(g);
        group.global2 = gibbs_t2_scaled(group, Mutation::rate_scale(mutation, Mutation::T2Rate), rng);
        group.c = gibbs_c_scaled(group.global2, Mutation::rate_scale(mutation, Mutation::CRate), rng);
        let t2 = group.global2;
        for block in &mut group.blocks {
            block.local2 = gibbs_l2_scaled(block.eta, t2, block.zeta, Mutation::rate_scale(mutation, Mutation::L2Rate), rng);
        }
        for block in &mut group.blocks {
            block.zeta = gibbs_zeta_scaled(block.local2, Mutation::rate_scale(mutation, Mutation::ZetaRate), rng);
        }
    }

    fn gibbs_signs(&mut self, e: usize, g: Group, rng: &mut ChaCha8Rng) {
        let sigma_m = self.hyper.sigma_m;
        for block in &mut self.terms[e].group_mut(g).blocks {
            for l in 0..block.xi.len() {
                block.m[l] = gibbs_m(block.xi[l], sigma_m, rng);
            }
        }
    }

    /// All updates of one coefficient function in the fixed order: `η`, the
    /// scales `T², c, L², ζ`, `μ`, the threshold, the signs `m`, then `ξ`.
    fn update_term(&mut self, e: usize, rng: &mut ChaCha8Rng) {
        let q = self.data.q();
        for g in [Group::Nonlinear, Group::Linear] {
            for k in 0..q {
                self.step_eta(e, g, k, rng);
            }
        }
        for g in [Group::Nonlinear, Group::Linear] {
            self.gibbs_scales(e, g, rng);
        }
        self.step_mu(e, rng);
        if !self.terms[e].key.is_intercept() {
            self.step_threshold(e, rng);
        }
        for g in [Group::Nonlinear, Group::Linear] {
            self.gibbs_signs(e, g, rng);
        }
        for g in [Group::Nonlinear, Group::Linear] {
            for k in 0..q {
                self.step_xi(e, g, k, rng);
            }
        }
    }

    pub fn sweep(&mut self, rng: &mut ChaCha8Rng) {
        self.resync();
        for e in 0..self.terms.len() {
            self.update_term(e, rng);
        }
    }

    /// Applies the threshold step rule to the current window and resets it.
    pub fn adapt(&mut self) {
        if self.window.1 > 0 {
            let rate = self.window.0 as f64 / self.window.1 as f64;
            self.z = adapt_threshold_step(rate, self.z, self.steps.z_range);
        }
        self.window = (0, 0);
    }

    pub fn params(&self) -> impl Iterator<Item = (EdgeKey, &EdgeParamBlock)> {
        self.terms.iter().map(|t| (t.key, &t.params))
    }

    #[cfg(test)]
    pub(crate) fn theta_cache(&self, e: usize) -> &[f64] {
        &self.terms[e].theta
    }
}
