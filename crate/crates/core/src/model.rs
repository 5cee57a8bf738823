//! Prepared inputs shared by the sampler and the post-processing passes.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};
use crate::prior::{compute_theta, threshold_value, EdgeParamBlock};
use crate::splines::{covariate_basis, SplineBasis, DEFAULT_DEGREE, DEFAULT_NUM_BASIS, DEFAULT_VAR_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineSettings {
    pub num_basis: usize,
    pub degree: usize,
    pub var_threshold: f64,
}

impl Default for SplineSettings {
    fn default() -> Self {
        Self { num_basis: DEFAULT_NUM_BASIS, degree: DEFAULT_DEGREE, var_threshold: DEFAULT_VAR_THRESHOLD }
    }
}

/// A coefficient function of node `child`: the intercept when `parent` is
/// `None`, otherwise the edge `Y_child ← Y_parent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeKey {
    pub child: usize,
    pub parent: Option<usize>,
}

impl EdgeKey {
    pub fn intercept(child: usize) -> Self {
        Self { child, parent: None }
    }

    pub fn edge(child: usize, parent: usize) -> Self {
        Self { child, parent: Some(parent) }
    }

    pub fn is_intercept(&self) -> bool {
        self.parent.is_none()
    }
}

/// Responses, covariates and the per-covariate spline bases.
#[derive(Debug, Clone)]
pub struct ModelData {
    pub y: Array2<f64>,
    pub x: Array2<f64>,
    pub bases: Vec<SplineBasis>,
    pub splines: SplineSettings,
}

impl ModelData {
    pub fn new(y: Array2<f64>, x: Array2<f64>, splines: SplineSettings) -> Result<Self> {
        if y.nrows() != x.nrows() {
            return Err(QdagError::Dimension(format!("Y has {} rows, X has {}", y.nrows(), x.nrows())));
        }
        if y.nrows() < 2 || y.ncols() == 0 {
            return Err(QdagError::Input(format!("need n >= 2 and p >= 1, got {}x{}", y.nrows(), y.ncols())));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(QdagError::Input("data contain non-finite values".into()));
        }
        let bases = (0..x.ncols())
            .map(|k| covariate_basis(x.column(k), k, splines.num_basis, splines.degree, splines.var_threshold))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { y, x, bases, splines })
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn q(&self) -> usize {
        self.x.ncols()
    }

    pub fn reduced_dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.reduced_dim).collect()
    }

    pub fn theta(&self, params: &EdgeParamBlock) -> Result<Vec<f64>> {
        compute_theta(&self.bases, self.x.view(), params)
    }

    /// Coefficient values per individual; intercepts are not thresholded.
    pub fn coefficient(&self, key: EdgeKey, params: &EdgeParamBlock) -> Result<Vec<f64>> {
        let theta = self.theta(params)?;
        Ok(if key.is_intercept() {
            theta
        } else {
            theta.into_iter().map(|t| threshold_value(t, params.threshold)).collect()
        })
    }
}

/// Column-wise z-scores; constant columns are rejected.
pub fn standardize_columns(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = x.nrows() as f64;
    let mut out = x.to_owned();
    for (k, mut col) in out.columns_mut().into_iter().enumerate() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        if !(var > 0.0) {
            return Err(QdagError::DegenerateCovariate(k));
        }
        let sd = var.sqrt();
        col.mapv_inplace(|v| (v - mean) / sd);
    }
    Ok(out)
}
