//! Synthetic quantile-DAG data with covariate-dependent edge functions.
//!
//! Nodes are generated from the last to the first; node `h` draws its
//! parents from the nodes after it. Every edge and intercept gets one of
//! four true coefficient forms, each increasing in `τ`, and responses are
//! produced by evaluating the conditional quantile function at a uniform
//! level drawn per observation and node.

use ndarray::{Array2, Array3, Array4};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};
use crate::exec::{sub_seed, Execution};
use crate::graph::Adjacency;
use crate::prior::threshold_value;
use crate::quantile_loss::QuantileLevel;

/// Smallest `|X|` fed to the logarithm in the fourth form.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl SimSettings {
    /// Settings with the threshold used for `q`: 0.5 up to two covariates,
    /// 1 beyond.
    pub fn new(n: usize, p: usize, q: usize, seed: u64) -> Self {
        Self { n, p, q, threshold: default_threshold(q), seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.n < 2 || self.q < 1 {
            return Err(QdagError::Input(format!("need p >= 2, n >= 2, q >= 1, got {self:?}")));
        }
        if !(self.threshold >= 0.0 && self.threshold.is_finite()) {
            return Err(QdagError::Input(format!("threshold must be finite and non-negative, got {}", self.threshold)));
        }
        Ok(())
    }
}

pub fn default_threshold(q: usize) -> f64 {
    if q <= 2 {
        0.5
    } else {
        1.0
    }
}

/// Number of parents of (0-based) node `h` among `p` nodes.
pub fn parent_count(p: usize, h: usize) -> usize {
    if h + 1 >= p {
        0
    } else {
        ((p - h - 1) / 5).max(1)
    }
}

/// Largest form index available with `q` covariates.
pub fn max_form(q: usize) -> usize {
    q.min(3)
}

/// True coefficient form: `q_star` covariates enter, in the order listed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormSpec {
    pub q_star: usize,
    pub chosen: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub settings: SimSettings,
    /// Parents of each node, ascending.
    pub parents: Vec<Vec<usize>>,
    pub intercept_forms: Vec<FormSpec>,
    /// `(child, parent, form)` for every true edge.
    pub edge_forms: Vec<(usize, usize, FormSpec)>,
    pub thresholds: Array2<f64>,
    pub tau_grid: Vec<f64>,
    /// `[τ, i, h, j]`.
    pub theta_true: Array4<f64>,
    pub beta_true: Array4<f64>,
    /// `[τ, i, h]`, intercept values.
    pub intercept_true: Array3<f64>,
    /// `[τ, i, h]`, conditional quantiles given the simulated parents.
    pub q_true: Array3<f64>,
}

impl SimTruth {
    pub fn dag(&self) -> Adjacency {
        let mut adj = Adjacency::empty(self.settings.p);
        for (h, ps) in self.parents.iter().enumerate() {
            for &j in ps {
                adj.set(h, j, true).expect("generated edge");
            }
        }
        adj
    }

    pub fn tau_index(&self, tau: f64) -> Option<usize> {
        self.tau_grid.iter().position(|t| (t - tau).abs() < 1e-9)
    }

    /// Covariates entering the true edge `h ← j`, if the edge exists.
    pub fn edge_covariates(&self, h: usize, j: usize) -> Option<&[usize]> {
        self.edge_forms.iter().find(|(a, b, _)| *a == h && *b == j).map(|(_, _, f)| f.chosen.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub y: Array2<f64>,
    pub x: Array2<f64>,
    pub truth: SimTruth,
}

pub fn gen_dag<R: Rng + ?Sized>(p: usize, rng: &mut R) -> Vec<Vec<usize>> {
    (0..p)
        .map(|h| {
            let k = parent_count(p, h);
            if k == 0 {
                return Vec::new();
            }
            let mut ps: Vec<usize> = sample(rng, p - h - 1, k).into_iter().map(|v| v + h + 1).collect();
            ps.sort_unstable();
            ps
        })
        .collect()
}

pub fn gen_covariates<R: Rng + ?Sized>(n: usize, q: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((n, q), |_| StandardNormal.sample(rng))
}

pub fn gen_form<R: Rng + ?Sized>(q: usize, rng: &mut R) -> FormSpec {
    let q_star = rng.random_range(0..=max_form(q));
    let chosen = sample(rng, q, q_star).into_vec();
    FormSpec { q_star, chosen }
}

/// `1+τ²`, then `X²_{k1} + log(1+τ²)`, `+ exp(X_{k2})`, `+ log|X_{k3}|`.
pub fn true_theta(form: &FormSpec, x_row: &[f64], tau: f64) -> Result<f64> {
    if form.q_star > 3 || form.chosen.len() != form.q_star || form.chosen.iter().any(|&k| k >= x_row.len()) {
        return Err(QdagError::Input(format!("invalid form {form:?} for {} covariates", x_row.len())));
    }
    let t2 = tau * tau;
    if form.q_star == 0 {
        return Ok(1.0 + t2);
    }
    let mut v = x_row[form.chosen[0]].powi(2) + (1.0 + t2).ln();
    if form.q_star >= 2 {
        v += x_row[form.chosen[1]].exp();
    }
    if form.q_star >= 3 {
        v += x_row[form.chosen[2]].abs().max(LOG_FLOOR).ln();
    }
    Ok(v)
}

/// Conditional quantile of node `h` for individual `i` at level `tau`,
/// given the parent values already in `y`.
fn node_quantile(
    truth_forms: (&[FormSpec], &[(usize, usize, FormSpec)]),
    thresholds: &Array2<f64>,
    h: usize,
    x_row: &[f64],
    y_row: &[f64],
    tau: f64,
) -> Result<f64> {
    let (intercepts, edges) = truth_forms;
    let mut v = true_theta(&intercepts[h], x_row, tau)?;
    for (c, j, form) in edges.iter().filter(|(c, _, _)| *c == h) {
        let b = threshold_value(true_theta(form, x_row, tau)?, thresholds[[*c, *j]]);
        if b != 0.0 {
            v += y_row[*j] * b;
        }
    }
    Ok(v)
}

pub fn simulate(settings: SimSettings) -> Result<SimDataset> {
    settings.validate()?;
    let SimSettings { n, p, q, threshold, seed } = settings;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let parents = gen_dag(p, &mut rng);
    let x = gen_covariates(n, q, &mut rng);
    let intercept_forms: Vec<FormSpec> = (0..p).map(|_| gen_form(q, &mut rng)).collect();
    let mut edge_forms = Vec::new();
    for (h, ps) in parents.iter().enumerate() {
        for &j in ps {
            edge_forms.push((h, j, gen_form(q, &mut rng)));
        }
    }
    let thresholds = Array2::from_elem((p, p), threshold);
    let forms = (intercept_forms.as_slice(), edge_forms.as_slice());

    let mut y = Array2::<f64>::zeros((n, p));
    for h in (0..p).rev() {
        for i in 0..n {
            let u: f64 = rng.random();
            let x_row = x.row(i).to_vec();
            let y_row = y.row(i).to_vec();
            y[[i, h]] = node_quantile(forms, &thresholds, h, &x_row, &y_row, u)?;
        }
    }
    let truth = truth_on_grid(settings, parents, intercept_forms, edge_forms, thresholds, &x, &y)?;
    Ok(SimDataset { y, x, truth })
}

/// Evaluates all true quantities on the grid 0.1, ..., 0.9.
pub fn truth_on_grid(
    settings: SimSettings,
    parents: Vec<Vec<usize>>,
    intercept_forms: Vec<FormSpec>,
    edge_forms: Vec<(usize, usize, FormSpec)>,
    thresholds: Array2<f64>,
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> Result<SimTruth> {
    let (n, p) = (settings.n, settings.p);
    let tau_grid: Vec<f64> = QuantileLevel::grid().into_iter().map(f64::from).collect();
    let g = tau_grid.len();
    let mut theta_true = Array4::<f64>::zeros((g, n, p, p));
    let mut beta_true = Array4::<f64>::zeros((g, n, p, p));
    let mut intercept_true = Array3::<f64>::zeros((g, n, p));
    let mut q_true = Array3::<f64>::zeros((g, n, p));
    for (t, &tau) in tau_grid.iter().enumerate() {
        for i in 0..n {
            let x_row = x.row(i).to_vec();
            let y_row = y.row(i).to_vec();
            for h in 0..p {
                intercept_true[[t, i, h]] = true_theta(&intercept_forms[h], &x_row, tau)?;
                q_true[[t, i, h]] =
                    node_quantile((&intercept_forms, &edge_forms), &thresholds, h, &x_row, &y_row, tau)?;
            }
            for (h, j, form) in &edge_forms {
                let th = true_theta(form, &x_row, tau)?;
                theta_true[[t, i, *h, *j]] = th;
                beta_true[[t, i, *h, *j]] = threshold_value(th, thresholds[[*h, *j]]);
            }
        }
    }
    Ok(SimTruth {
        settings,
        parents,
        intercept_forms,
        edge_forms,
        thresholds,
        tau_grid,
        theta_true,
        beta_true,
        intercept_true,
        q_true,
    })
}

/// `count` datasets with per-replicate seeds derived from `settings.seed`.
pub fn simulate_replicates(settings: SimSettings, count: usize, exec: Execution) -> Result<Vec<SimDataset>> {
    exec.map((0..count as u64).collect(), |r| simulate(SimSettings { seed: sub_seed(settings.seed, r), ..settings }))
        .into_iter()
        .collect()
}
