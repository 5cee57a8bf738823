//! Cubic B-spline designs, the second-difference penalty and the spectral
//! reparameterization of the penalized spline block.
//!
//! The reduced design `X*` of a covariate is `U D^{1/2}` where `U D U^T` is the
//! leading part of `X Σ⁻ X^T`, truncated once the retained eigenvalues explain
//! the requested share of the total. Interior knots sit at empirical
//! quantiles of the covariate.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};

pub const DEFAULT_NUM_BASIS: usize = 20;
pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_VAR_THRESHOLD: f64 = 0.995;

/// Relative singular-value cutoff for the pseudo-inverse and for deciding which
/// eigenvalues count as positive.
const RANK_TOL: f64 = 1e-10;

/// Per-covariate spline basis after reparameterization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplineBasis {
    pub covariate_index: usize,
    pub design_raw: Array2<f64>,
    pub design_reduced: Array2<f64>,
    /// Retained eigenvalues, descending.
    pub eigvals: Array1<f64>,
    /// Orthonormal B x B* factor in coefficient space.
    pub eigvecs: Array2<f64>,
    pub reduced_dim: usize,
    pub knots: Array1<f64>,
}

/// Clamped knot vector of length `num_basis + degree + 1`: the padded range
/// end points repeated `degree + 1` times with `num_basis - degree - 1`
/// interior knots at equally spaced empirical quantiles of `x`. Interior knots
/// fall back to an even grid when ties make the quantiles non-increasing.
pub fn clamped_quantile_knots(x: ArrayView1<f64>, num_basis: usize, degree: usize) -> Result<Array1<f64>> {
    if x.len() < 2 {
        return Err(QdagError::Input(format!("need at least 2 points, got {}", x.len())));
    }
    if num_basis < degree + 1 {
        return Err(QdagError::Input(format!(
            "num_basis {num_basis} must be at least degree + 1 = {}",
            degree + 1
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(QdagError::Input("covariate contains non-finite values".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if hi <= lo {
        return Err(QdagError::DegenerateCovariate(0));
    }
    let pad = 1e-6 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let n_interior = num_basis - degree - 1;

    let quantile = |f: f64| {
        let pos = f * (sorted.len() - 1) as f64;
        let l = pos.floor() as usize;
        let u = (l + 1).min(sorted.len() - 1);
        sorted[l] + (pos - l as f64) * (sorted[u] - sorted[l])
    };
    let frac = |i: usize| i as f64 / (n_interior + 1) as f64;
    let mut interior: Vec<f64> = (1..=n_interior).map(|i| quantile(frac(i))).collect();
    let strictly_inside = std::iter::once(lo)
        .chain(interior.iter().copied())
        .chain(std::iter::once(hi))
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| w[1] > w[0]);
    if !strictly_inside {
        interior = (1..=n_interior).map(|i| lo + frac(i) * (hi - lo)).collect();
    }

    let mut knots = vec![lo; degree + 1];
    knots.extend(interior);
    knots.extend(std::iter::repeat_n(hi, degree + 1));
    Ok(Array1::from_vec(knots))
}

/// Non-zero basis values at `x` inside knot span `span`, via the triangular
/// de Boor table. Returns `degree + 1` values for bases `span-degree..=span`.
fn basis_funs(span: usize, x: f64, degree: usize, knots: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; degree + 1];
    let mut left = vec![0.0; degree + 1];
    let mut right = vec![0.0; degree + 1];
    out[0] = 1.0;
    for j in 1..=degree {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let tmp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * tmp;
            saved = left[j - r] * tmp;
        }
        out[j] = saved;
    }
    out
}

pub fn build_bspline_design(x: ArrayView1<f64>, num_basis: usize, degree: usize) -> Result<Array2<f64>> {
    let knots = clamped_quantile_knots(x, num_basis, degree)?;
    Ok(design_from_knots(x, knots.as_slice().unwrap(), num_basis, degree))
}

fn design_from_knots(x: ArrayView1<f64>, knots: &[f64], num_basis: usize, degree: usize) -> Array2<f64> {
    let mut design = Array2::zeros((x.len(), num_basis));
    for (r, &xv) in x.iter().enumerate() {
        // last span whose left knot is <= x, restricted to the valid range
        let mut span = degree;
        while span < num_basis - 1 && knots[span + 1] <= xv {
            span += 1;
        }
        for (o, v) in basis_funs(span, xv, degree, knots).into_iter().enumerate() {
            design[[r, span - degree + o]] = v;
        }
    }
    design
}

/// `D₂ᵀD₂` for the `(B-2) x B` second-difference operator.
pub fn penalty_matrix(num_basis: usize) -> Result<Array2<f64>> {
    if num_basis < 3 {
        return Err(QdagError::Dimension(format!("penalty needs B >= 3, got {num_basis}")));
    }
    let mut d2 = Array2::<f64>::zeros((num_basis - 2, num_basis));
    for r in 0..num_basis - 2 {
        d2[[r, r]] = 1.0;
        d2[[r, r + 1]] = -2.0;
        d2[[r, r + 2]] = 1.0;
    }
    Ok(d2.t().dot(&d2))
}

pub(crate) fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_dmatrix(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Symmetric positive semi-definite square root of the Moore-Penrose inverse.
fn pinv_sqrt(penalty: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(penalty.clone());
    let max = eig.eigenvalues.iter().copied().fold(0.0_f64, f64::max);
    let b = penalty.nrows();
    let mut out = DMatrix::zeros(b, b);
    for (l, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > RANK_TOL * max {
            let v = eig.eigenvectors.column(l);
            out += (v * v.transpose()) / ev.sqrt();
        }
    }
    out
}

/// Moore-Penrose pseudo-inverse with the relative cutoff used throughout.
pub fn pseudo_inverse(a: ArrayView2<f64>) -> Array2<f64> {
    let m = to_dmatrix(a);
    let svd = m.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let pinv = svd
        .pseudo_inverse(RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .expect("both factors were computed");
    from_dmatrix(&pinv)
}

pub fn reparameterize(design_raw: ArrayView2<f64>, penalty: ArrayView2<f64>, var_threshold: f64) -> Result<SplineBasis> {
    if !(var_threshold > 0.0 && var_threshold <= 1.0) {
        return Err(QdagError::Input(format!("var_threshold must lie in (0, 1], got {var_threshold}")));
    }
    let b = design_raw.ncols();
    if penalty.nrows() != b || penalty.ncols() != b {
        return Err(QdagError::Dimension(format!(
            "penalty is {}x{}, design has {b} columns",
            penalty.nrows(),
            penalty.ncols()
        )));
    }
    if design_raw.iter().all(|v| *v == 0.0) {
        return Err(QdagError::DegenerateDesign("design matrix is identically zero".into()));
    }
    // X Σ⁻ Xᵀ = (X S)(X S)ᵀ with S = (Σ⁻)^{1/2}; the nonzero spectrum is shared
    // with the B x B Gram matrix (X S)ᵀ(X S).
    let xs = to_dmatrix(design_raw) * pinv_sqrt(&to_dmatrix(penalty));
    let gram = xs.transpose() * &xs;
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let max = eig.eigenvalues[order[0]];
    if !(max > 0.0) {
        return Err(QdagError::DegenerateDesign("penalized design has no positive spectrum".into()));
    }
    let positive: Vec<usize> = order.into_iter().filter(|&l| eig.eigenvalues[l] > RANK_TOL * max).collect();
    let total: f64 = positive.iter().map(|&l| eig.eigenvalues[l]).sum();
    let mut keep = 0;
    let mut acc = 0.0;
    for &l in &positive {
        acc += eig.eigenvalues[l];
        keep += 1;
        if acc / total >= var_threshold - 1e-12 {
            break;
        }
    }
    let kept = &positive[..keep];

    let mut eigvecs = Array2::zeros((b, keep));
    let mut eigvals = Array1::zeros(keep);
    for (c, &l) in kept.iter().enumerate() {
        // fix the sign so the largest-magnitude entry is positive
        let col = eig.eigenvectors.column(l);
        let pivot = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..b {
            eigvecs[[r, c]] = sign * col[r];
        }
        eigvals[c] = eig.eigenvalues[l];
    }
    // U D^{1/2} = X S V
    let design_reduced = from_dmatrix(&xs).dot(&eigvecs);

    Ok(SplineBasis {
        covariate_index: 0,
        design_raw: design_raw.to_owned(),
        design_reduced,
        eigvals,
        eigvecs,
        reduced_dim: keep,
        knots: Array1::zeros(0),
    })
}

/// Design, penalty and reparameterization for one covariate column.
pub fn covariate_basis(
    x: ArrayView1<f64>,
    covariate_index: usize,
    num_basis: usize,
    degree: usize,
    var_threshold: f64,
) -> Result<SplineBasis> {
    let knots = clamped_quantile_knots(x, num_basis, degree).map_err(|e| match e {
        QdagError::DegenerateCovariate(_) => QdagError::DegenerateCovariate(covariate_index),
        other => other,
    })?;
    let raw = design_from_knots(x, knots.as_slice().unwrap(), num_basis, degree);
    let mut basis = reparameterize(raw.view(), penalty_matrix(num_basis)?.view(), var_threshold)?;
    basis.covariate_index = covariate_index;
    basis.knots = knots;
    Ok(basis)
}
