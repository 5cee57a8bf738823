//! Parameter-expanded horseshoe blocks, edge-function evaluation and hard
//! thresholding.
//!
//! An edge function is `θ(X_i) = μ + Σ_k (X*_k α*_k)_i + Σ_k X_ik α⁰_k` with
//! `α*_k = η_k ξ_k`, and the edge strength is `β = θ 1(|θ| > t)`. Both the
//! nonlinear and the linear coefficients carry a horseshoe scale on `η`
//! (global `T` shared across covariates, local `L` per covariate) written
//! through the inverse-gamma expansion of the half-Cauchy.

use ndarray::ArrayView2;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};
use crate::splines::SplineBasis;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorHyper {
    /// Standard deviation of each `ξ` around its sign `m`.
    pub sigma_m: f64,
    /// Prior standard deviation of the intercept `μ`.
    pub sigma_mu: f64,
    /// Gamma shape of the threshold prior.
    pub a: f64,
    /// Gamma rate of the threshold prior.
    pub b: f64,
}

impl Default for PriorHyper {
    fn default() -> Self {
        Self { sigma_m: 1.0, sigma_mu: 1.0, a: 10.0, b: 10.0 }
    }
}

impl PriorHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.sigma_m, self.sigma_mu, self.a, self.b].iter().all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(QdagError::Config(format!("prior hyperparameters must be positive: {self:?}")))
        }
    }

    /// Threshold prior with mean equal to `strength`, keeping the shape `a`.
    pub fn with_expected_strength(mut self, strength: f64) -> Result<Self> {
        if !(strength > 0.0 && strength.is_finite()) {
            return Err(QdagError::Config(format!("expected edge strength must be positive, got {strength}")));
        }
        self.b = self.a / strength;
        Ok(self)
    }

    pub fn threshold_logprior(&self, t: f64) -> f64 {
        if t <= 0.0 {
            f64::NEG_INFINITY
        } else {
            (self.a - 1.0) * t.ln() - self.b * t
        }
    }

    pub fn mu_logprior(&self, mu: f64) -> f64 {
        -0.5 * mu * mu / (self.sigma_mu * self.sigma_mu)
    }

    pub fn xi_logprior(&self, xi: &[f64], m: &[i8]) -> f64 {
        let s2 = self.sigma_m * self.sigma_m;
        xi.iter().zip(m).map(|(x, s)| -0.5 * (x - *s as f64).powi(2) / s2).sum()
    }
}

/// One covariate's coefficient block `α = η ξ` with its local scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PxhsBlock {
    pub eta: f64,
    pub xi: Vec<f64>,
    pub m: Vec<i8>,
    /// Local scale squared, `L²`.
    pub local2: f64,
    pub zeta: f64,
}

impl PxhsBlock {
    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// `α = η ξ`.
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        self.xi.iter().map(move |x| self.eta * x)
    }

    /// `log N(η; 0, T² L²)` up to a constant.
    pub fn eta_logprior(&self, global2: f64) -> f64 {
        let v = global2 * self.local2;
        -0.5 * self.eta * self.eta / v
    }
}

/// The blocks of all covariates sharing one global scale `T²` and its
/// auxiliary `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PxhsGroup {
    pub global2: f64,
    pub c: f64,
    pub blocks: Vec<PxhsBlock>,
}

impl PxhsGroup {
    /// Sampler start: `η = 0.01`, `ξ = m = +1`, unit scales.
    pub fn initial(dims: &[usize]) -> Self {
        Self {
            global2: 1.0,
            c: 1.0,
            blocks: dims
                .iter()
                .map(|&d| PxhsBlock { eta: 0.01, xi: vec![1.0; d], m: vec![1; d], local2: 1.0, zeta: 1.0 })
                .collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(dims: &[usize], sigma_m: f64, rng: &mut R) -> Self {
        let c = inv_gamma(0.5, 1.0, rng);
        let global2 = inv_gamma(0.5, 1.0 / c, rng);
        let blocks = dims
            .iter()
            .map(|&d| {
                let zeta = inv_gamma(0.5, 1.0, rng);
                let local2 = inv_gamma(0.5, 1.0 / zeta, rng);
                let z: f64 = StandardNormal.sample(rng);
                let eta = z * (global2 * local2).sqrt();
                let m: Vec<i8> = (0..d).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
                let xi = m
                    .iter()
                    .map(|&s| {
                        let z: f64 = StandardNormal.sample(rng);
                        s as f64 + sigma_m * z
                    })
                    .collect();
                PxhsBlock { eta, xi, m, local2, zeta }
            })
            .collect();
        Self { global2, c, blocks }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(PxhsBlock::dim).collect()
    }
}

/// Parameters of one edge function `θ_hj` (or of a node intercept).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeParamBlock {
    pub mu: f64,
    pub nonlinear: PxhsGroup,
    pub linear: PxhsGroup,
    pub threshold: f64,
}

impl EdgeParamBlock {
    pub fn initial(reduced_dims: &[usize], threshold: f64) -> Self {
        Self {
            mu: 0.0,
            nonlinear: PxhsGroup::initial(reduced_dims),
            linear: PxhsGroup::initial(&vec![1; reduced_dims.len()]),
            threshold,
        }
    }

    pub fn q(&self) -> usize {
        self.nonlinear.blocks.len()
    }

    pub fn reduced_dims(&self) -> Vec<usize> {
        self.nonlinear.dims()
    }
}

/// `IG(shape, rate)` draw as the reciprocal of a `Gamma(shape, 1/rate)` draw.
pub fn inv_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0 / rate).expect("positive IG parameters").sample(rng);
    1.0 / g
}

fn check_dims(bases: &[SplineBasis], covariates: ArrayView2<f64>, params: &EdgeParamBlock) -> Result<usize> {
    let n = covariates.nrows();
    let q = covariates.ncols();
    if bases.len() != q || params.nonlinear.blocks.len() != q || params.linear.blocks.len() != q {
        return Err(QdagError::Dimension(format!(
            "{} bases, {q} covariates, {} nonlinear and {} linear blocks",
            bases.len(),
            params.nonlinear.blocks.len(),
            params.linear.blocks.len()
        )));
    }
    for (k, (basis, block)) in bases.iter().zip(&params.nonlinear.blocks).enumerate() {
        if basis.design_reduced.nrows() != n || basis.reduced_dim != block.dim() {
            return Err(QdagError::Dimension(format!(
                "covariate {k}: basis {}x{} vs n = {n}, block dim {}",
                basis.design_reduced.nrows(),
                basis.reduced_dim,
                block.dim()
            )));
        }
    }
    if params.linear.blocks.iter().any(|b| b.dim() != 1) {
        return Err(QdagError::Dimension("linear blocks must be scalar".into()));
    }
    Ok(n)
}

/// `θ_i = μ + Σ_k (X*_k η_k ξ_k)_i + Σ_k X_ik η⁰_k ξ⁰_k`.
pub fn compute_theta(bases: &[SplineBasis], covariates: ArrayView2<f64>, params: &EdgeParamBlock) -> Result<Vec<f64>> {
    let n = check_dims(bases, covariates, params)?;
    let mut theta = vec![params.mu; n];
    for (k, (basis, block)) in bases.iter().zip(&params.nonlinear.blocks).enumerate() {
        let alpha: Vec<f64> = block.coefficients().collect();
        for (i, t) in theta.iter_mut().enumerate() {
            let row = basis.design_reduced.row(i);
            *t += row.iter().zip(&alpha).map(|(x, a)| x * a).sum::<f64>();
        }
        let lin = params.linear.blocks[k].eta * params.linear.blocks[k].xi[0];
        for (i, t) in theta.iter_mut().enumerate() {
            *t += covariates[[i, k]] * lin;
        }
    }
    Ok(theta)
}

/// Hard thresholding `θ 1(|θ| > t)`.
#[inline]
pub fn threshold_value(theta: f64, threshold: f64) -> f64 {
    if theta.abs() > threshold {
        theta
    } else {
        0.0
    }
}

pub fn compute_beta(theta: &[f64], threshold: f64) -> Vec<f64> {
    theta.iter().map(|&t| threshold_value(t, threshold)).collect()
}

/// Joint prior draw for one edge function.
pub fn sample_prior<R: Rng + ?Sized>(hyper: &PriorHyper, reduced_dims: &[usize], rng: &mut R) -> EdgeParamBlock {
    let z: f64 = StandardNormal.sample(rng);
    let mu = hyper.sigma_mu * z;
    let nonlinear = PxhsGroup::sample(reduced_dims, hyper.sigma_m, rng);
    let linear = PxhsGroup::sample(&vec![1; reduced_dims.len()], hyper.sigma_m, rng);
    let threshold = Gamma::new(hyper.a, 1.0 / hyper.b).expect("valid gamma prior").sample(rng);
    EdgeParamBlock { mu, nonlinear, linear, threshold }
}

/// Prior draws of `β = θ 1(|θ| > t)` for a single scalar horseshoe
/// coefficient `θ = η ξ` with unit design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassProfile {
    pub n_draws: usize,
    pub zero_fraction: f64,
    pub bins: Vec<(f64, f64)>,
    /// Share of the nonzero draws whose `|β|` falls in each `(lo, hi]` bin.
    pub mass: Vec<f64>,
}

pub fn scalar_beta_draw<R: Rng + ?Sized>(hyper: &PriorHyper, rng: &mut R) -> f64 {
    let group = PxhsGroup::sample(&[1], hyper.sigma_m, rng);
    let theta = group.blocks[0].eta * group.blocks[0].xi[0];
    let t: f64 = Gamma::new(hyper.a, 1.0 / hyper.b).expect("valid gamma prior").sample(rng);
    threshold_value(theta, t)
}

pub fn nonlocal_mass_profile<R: Rng + ?Sized>(
    hyper: &PriorHyper,
    n_draws: usize,
    bins: &[(f64, f64)],
    rng: &mut R,
) -> Result<MassProfile> {
    hyper.validate()?;
    if n_draws == 0 {
        return Err(QdagError::Input("need at least one draw".into()));
    }
    let mut zeros = 0usize;
    let mut counts = vec![0usize; bins.len()];
    for _ in 0..n_draws {
        let beta = scalar_beta_draw(hyper, rng);
        if beta == 0.0 {
            zeros += 1;
            continue;
        }
        let a = beta.abs();
        for (c, (lo, hi)) in counts.iter_mut().zip(bins) {
            if a > *lo && a <= *hi {
                *c += 1;
            }
        }
    }
    let nonzero = (n_draws - zeros).max(1) as f64;
    Ok(MassProfile {
        n_draws,
        zero_fraction: zeros as f64 / n_draws as f64,
        bins: bins.to_vec(),
        mass: counts.iter().map(|c| *c as f64 / nonzero).collect(),
    })
}

/// `N(0, σ)` sampler shared by the random-walk proposals.
pub(crate) fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("finite positive step")
}
