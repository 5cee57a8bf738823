//! Check loss and the asymmetric-Laplace working likelihood.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self(tau))
        } else {
            Err(QdagError::Input(format!("quantile level must lie in (0, 1), got {tau}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `log τ + log(1-τ)`, the normalizing constant of the working density.
    pub fn log_norm(self) -> f64 {
        self.0.ln() + (1.0 - self.0).ln()
    }

    /// The nine-level grid 0.1, ..., 0.9.
    pub fn grid() -> Vec<QuantileLevel> {
        (1..=9).map(|k| QuantileLevel(k as f64 / 10.0)).collect()
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = QdagError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(t: QuantileLevel) -> f64 {
        t.0
    }
}

/// Fitted conditional quantiles of one node across individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedQuantiles {
    pub node: usize,
    pub values: Vec<f64>,
}

/// `ψ_τ(x)`; zero residuals fall on the `τ` branch.
#[inline]
pub fn check_loss(x: f64, tau: QuantileLevel) -> f64 {
    if x >= 0.0 {
        tau.0 * x
    } else {
        -(1.0 - tau.0) * x
    }
}

#[inline]
pub fn al_logdensity(u: f64, tau: QuantileLevel) -> f64 {
    tau.log_norm() - check_loss(u, tau)
}

/// Sum of check losses of `y - fitted`; the node log-likelihood is
/// `n log(τ(1-τ))` minus this.
pub fn total_check_loss(y: ArrayView1<f64>, fitted: &[f64], tau: QuantileLevel) -> f64 {
    y.iter().zip(fitted).map(|(yi, fi)| check_loss(yi - fi, tau)).sum()
}

pub fn node_loglik(y: ArrayView1<f64>, fitted: &FittedQuantiles, tau: QuantileLevel) -> Result<f64> {
    if y.len() != fitted.values.len() {
        return Err(QdagError::Dimension(format!(
            "node {}: {} responses vs {} fitted values",
            fitted.node,
            y.len(),
            fitted.values.len()
        )));
    }
    Ok(y.len() as f64 * tau.log_norm() - total_check_loss(y, &fitted.values, tau))
}

/// Joint working log-likelihood; `-inf` when the union graph is not a DAG.
pub fn joint_loglik(
    y: ArrayView2<f64>,
    fitted_all: &[FittedQuantiles],
    union_is_dag: bool,
    tau: QuantileLevel,
) -> Result<f64> {
    if fitted_all.len() != y.ncols() {
        return Err(QdagError::Dimension(format!(
            "{} fitted nodes for {} response columns",
            fitted_all.len(),
            y.ncols()
        )));
    }
    if !union_is_dag {
        return Ok(f64::NEG_INFINITY);
    }
    fitted_all
        .iter()
        .map(|f| node_loglik(y.column(f.node), f, tau))
        .sum()
}
