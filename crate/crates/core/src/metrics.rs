//! Recovery metrics against simulation truth: two-level selection rates
//! and AUC, estimation norms, and the adjusted quantile MSE.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};
use crate::exec::Execution;
use crate::model::ModelData;
use crate::prior::threshold_value;
use crate::sampler::{Mode, PosteriorDraws};
use crate::selection::{covariate_posterior_probs, edge_posterior_probs, select_covariates, select_edges};
use crate::simdata::SimTruth;

pub const METRIC_NAMES: [&str; 9] =
    ["tpr_y", "fpr_y", "auc_y", "tpr_x", "fpr_x", "auc_x", "norm_beta", "norm_theta", "mse"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn count(selected: &[bool], truth: &[bool]) -> Self {
        let mut c = Self::default();
        for (&s, &t) in selected.iter().zip(truth) {
            match (s, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn tpr(&self) -> Option<f64> {
        let pos = self.tp + self.fn_;
        (pos > 0).then(|| self.tp as f64 / pos as f64)
    }

    pub fn fpr(&self) -> Option<f64> {
        let neg = self.fp + self.tn;
        (neg > 0).then(|| self.fp as f64 / neg as f64)
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(QdagError::Dimension(format!("{a} values against {b} truth flags")));
    }
    Ok(())
}

/// `(TPR, FPR)` of one selection.
pub fn selection_rates(selected: &[bool], truth: &[bool]) -> Result<(f64, f64)> {
    same_len(selected.len(), truth.len())?;
    let c = Confusion::count(selected, truth);
    match (c.tpr(), c.fpr()) {
        (Some(t), Some(f)) => Ok((t, f)),
        _ => Err(QdagError::UndefinedRate("truth needs at least one positive and one negative".into())),
    }
}

/// Area under the ROC curve, computed as the Mann–Whitney statistic with
/// average ranks for tied scores.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    same_len(scores.len(), truth.len())?;
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = truth.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(QdagError::UndefinedRate("AUC needs both classes".into()));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(QdagError::Input(format!("score {bad} is not a number")));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        rank_sum += mean_rank * idx[start..end].iter().filter(|&&i| truth[i]).count() as f64;
        start = end;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Per-node rates, averaged over the nodes on which each rate is defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedRates {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub auc: Option<f64>,
}

fn mean_defined(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut s, mut k) = (0.0, 0usize);
    for x in v.flatten() {
        s += x;
        k += 1;
    }
    (k > 0).then(|| s / k as f64)
}

/// Each entry holds one node's `(selected, scores, truth)` cells.
pub fn node_averaged_rates(nodes: &[(Vec<bool>, Vec<f64>, Vec<bool>)]) -> Result<AveragedRates> {
    let mut per = Vec::with_capacity(nodes.len());
    for (sel, score, truth) in nodes {
        same_len(sel.len(), truth.len())?;
        let c = Confusion::count(sel, truth);
        let a = if c.tpr().is_some() && c.fpr().is_some() { Some(auc(score, truth)?) } else { None };
        per.push((c.tpr(), c.fpr(), a));
    }
    Ok(AveragedRates {
        tpr: mean_defined(per.iter().map(|r| r.0)),
        fpr: mean_defined(per.iter().map(|r| r.1)),
        auc: mean_defined(per.iter().map(|r| r.2)),
    })
}

fn frobenius_scaled(est: ArrayView3<f64>, truth: ArrayView3<f64>) -> f64 {
    let n = est.dim().0 as f64;
    let ss: f64 = est.iter().zip(truth.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    (ss / n).sqrt()
}

/// `(Δβ, Δθ)`: `sqrt((1/n) Σ_h ‖est_h − true_h‖²_F)` over `n × p × p`
/// arrays, scaled by `1/√2` when the ordering is learned.
pub fn estimation_norms(
    beta_est: ArrayView3<f64>,
    beta_true: ArrayView3<f64>,
    theta_est: ArrayView3<f64>,
    theta_true: ArrayView3<f64>,
    mode: Mode,
) -> Result<(f64, f64)> {
    let d = beta_est.dim();
    if beta_true.dim() != d || theta_est.dim() != d || theta_true.dim() != d || d.1 != d.2 {
        return Err(QdagError::Dimension(format!(
            "estimation arrays {:?}, {:?}, {:?}, {:?}",
            d,
            beta_true.dim(),
            theta_est.dim(),
            theta_true.dim()
        )));
    }
    let scale = if mode == Mode::Qdagx { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
    Ok((scale * frobenius_scaled(beta_est, beta_true), scale * frobenius_scaled(theta_est, theta_true)))
}

/// `(1/n) Σ_h ‖q_true_h − q_est_h‖² / (max{1, ⌊(p−h)/5⌋} + 1)` with `h`
/// counted from 1.
pub fn adjusted_mse(q_true: ArrayView2<f64>, q_est: ArrayView2<f64>) -> Result<f64> {
    if q_true.dim() != q_est.dim() {
        return Err(QdagError::Dimension(format!("{:?} vs {:?}", q_true.dim(), q_est.dim())));
    }
    let (n, p) = q_true.dim();
    let mut total = 0.0;
    for h in 0..p {
        let ss: f64 = q_true.column(h).iter().zip(q_est.column(h)).map(|(a, b)| (a - b) * (a - b)).sum();
        let parents = ((p - h - 1) / 5).max(1);
        total += ss / (parents + 1) as f64;
    }
    Ok(total / n as f64)
}

/// Coefficient functions evaluated at the posterior means of their
/// parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub theta: Array3<f64>,
    pub beta: Array3<f64>,
    pub intercept: Array2<f64>,
    pub quantiles: Array2<f64>,
}

pub fn posterior_mean_estimates(draws: &PosteriorDraws, data: &ModelData) -> Result<PointEstimates> {
    if draws.is_empty() {
        return Err(QdagError::EmptyArchive);
    }
    let (n, p) = (data.n(), data.p());
    let mut theta = Array3::<f64>::zeros((n, p, p));
    let mut beta = Array3::<f64>::zeros((n, p, p));
    let mut intercept = Array2::<f64>::zeros((n, p));
    for (e, key) in draws.terms.iter().enumerate() {
        let params = draws.mean_params(e)?;
        let th = data.theta(&params)?;
        match key.parent {
            None => {
                for i in 0..n {
                    intercept[[i, key.child]] = th[i];
                }
            }
            Some(j) => {
                for i in 0..n {
                    theta[[i, key.child, j]] = th[i];
                    beta[[i, key.child, j]] = threshold_value(th[i], params.threshold);
                }
            }
        }
    }
    let mut quantiles = intercept.clone();
    for i in 0..n {
        for h in 0..p {
            for j in 0..p {
                quantiles[[i, h]] += data.y[[i, j]] * beta[[i, h, j]];
            }
        }
    }
    Ok(PointEstimates { theta, beta, intercept, quantiles })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tau: f64,
    pub tpr_y: Option<f64>,
    pub fpr_y: Option<f64>,
    pub auc_y: Option<f64>,
    pub tpr_x: Option<f64>,
    pub fpr_x: Option<f64>,
    pub auc_x: Option<f64>,
    pub norm_beta: f64,
    pub norm_theta: f64,
    pub mse: f64,
}

impl MetricReport {
    /// Values in the order of [`METRIC_NAMES`].
    pub fn values(&self) -> [Option<f64>; 9] {
        [
            self.tpr_y,
            self.fpr_y,
            self.auc_y,
            self.tpr_x,
            self.fpr_x,
            self.auc_x,
            Some(self.norm_beta),
            Some(self.norm_theta),
            Some(self.mse),
        ]
    }
}

/// `[i, h, j]`: whether the true `β_hj(X_i)` is nonzero at grid level `t`.
pub fn edge_truth(truth: &SimTruth, t: usize) -> Array3<bool> {
    truth.beta_true.index_axis(ndarray::Axis(0), t).mapv(|b| b != 0.0)
}

/// `[h, j, k]`: whether covariate `k` enters the true edge `h ← j`.
pub fn covariate_truth(truth: &SimTruth) -> Array3<bool> {
    let (p, q) = (truth.settings.p, truth.settings.q);
    let mut out = Array3::from_elem((p, p, q), false);
    for (h, j, form) in &truth.edge_forms {
        for &k in &form.chosen {
            out[[*h, *j, k]] = true;
        }
    }
    out
}

/// Edge cells of node `h`: all `(i, j)` with `j ≠ h`.
fn edge_cells(n: usize, p: usize, h: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| (0..p).filter(move |&j| j != h).map(move |j| (i, j)))
}

/// Rates from edge calls against edge truth, both `n × p × p`.
pub fn edge_rates(selected: &Array3<bool>, scores: &Array3<f64>, truth: &Array3<bool>) -> Result<AveragedRates> {
    let (n, p, _) = truth.dim();
    if selected.dim() != truth.dim() || scores.dim() != truth.dim() {
        return Err(QdagError::Dimension("edge arrays disagree in shape".into()));
    }
    let nodes: Vec<_> = (0..p)
        .map(|h| {
            let cells: Vec<_> = edge_cells(n, p, h).collect();
            (
                cells.iter().map(|&(i, j)| selected[[i, h, j]]).collect(),
                cells.iter().map(|&(i, j)| scores[[i, h, j]]).collect(),
                cells.iter().map(|&(i, j)| truth[[i, h, j]]).collect(),
            )
        })
        .collect();
    node_averaged_rates(&nodes)
}

/// Rates from covariate calls against covariate truth, both `p × p × q`.
pub fn covariate_rates(selected: &Array3<bool>, scores: &Array3<f64>, truth: &Array3<bool>) -> Result<AveragedRates> {
    let (p, _, q) = truth.dim();
    if selected.dim() != truth.dim() || scores.dim() != truth.dim() {
        return Err(QdagError::Dimension("covariate arrays disagree in shape".into()));
    }
    let nodes: Vec<_> = (0..p)
        .map(|h| {
            let cells: Vec<(usize, usize)> = (0..p).filter(|&j| j != h).flat_map(|j| (0..q).map(move |k| (j, k))).collect();
            (
                cells.iter().map(|&(j, k)| selected[[h, j, k]]).collect(),
                cells.iter().map(|&(j, k)| scores[[h, j, k]]).collect(),
                cells.iter().map(|&(j, k)| truth[[h, j, k]]).collect(),
            )
        })
        .collect();
    node_averaged_rates(&nodes)
}

/// All nine metrics of one fit at one grid level.
pub fn evaluate(
    truth: &SimTruth,
    data: &ModelData,
    draws: &PosteriorDraws,
    fdr_target: f64,
    exec: Execution,
) -> Result<MetricReport> {
    let tau = draws.tau.value();
    let t = truth
        .tau_index(tau)
        .ok_or_else(|| QdagError::Input(format!("level {tau} is not on the truth grid")))?;
    let e_truth = edge_truth(truth, t);
    let x_truth = covariate_truth(truth);
    let e_post = edge_posterior_probs(draws, data, exec)?;
    let x_post = covariate_posterior_probs(draws)?;
    let e_sel = select_edges(&e_post, Some(&e_truth), fdr_target)?;
    let x_sel = select_covariates(&x_post, Some(&x_truth), fdr_target)?;
    let y_rates = edge_rates(&e_sel.selected, &e_post.probs, &e_truth)?;
    let x_rates = covariate_rates(&x_sel.selected, &x_post.probs, &x_truth)?;

    let est = posterior_mean_estimates(draws, data)?;
    let ax = ndarray::Axis(0);
    let (norm_beta, norm_theta) = estimation_norms(
        est.beta.view(),
        truth.beta_true.index_axis(ax, t),
        est.theta.view(),
        truth.theta_true.index_axis(ax, t),
        draws.config.mode,
    )?;
    let mse = adjusted_mse(truth.q_true.index_axis(ax, t), est.quantiles.view())?;
    Ok(MetricReport {
        tau,
        tpr_y: y_rates.tpr,
        fpr_y: y_rates.fpr,
        auc_y: y_rates.auc,
        tpr_x: x_rates.tpr,
        fpr_x: x_rates.fpr,
        auc_x: x_rates.auc,
        norm_beta,
        norm_theta,
        mse,
    })
}

/// One tidy plot-data row: mean and sample standard deviation of a metric
/// across replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub mode: Mode,
    pub tau: f64,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub count: usize,
}

/// Summarizes `(mode, report)` pairs by mode, level and metric. Undefined
/// values are left out of their cell.
pub fn plot_rows(reports: &[(Mode, MetricReport)]) -> Vec<PlotRow> {
    let mut keys: Vec<(Mode, u64)> = Vec::new();
    for (m, r) in reports {
        let k = (*m, r.tau.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.sort_by(|a, b| (a.0 as u8).cmp(&(b.0 as u8)).then(f64::from_bits(a.1).total_cmp(&f64::from_bits(b.1))));
    let mut rows = Vec::new();
    for (mode, bits) in keys {
        let group: Vec<&MetricReport> =
            reports.iter().filter(|(m, r)| *m == mode && r.tau.to_bits() == bits).map(|(_, r)| r).collect();
        for (idx, name) in METRIC_NAMES.iter().enumerate() {
            let vals: Vec<f64> = group.iter().filter_map(|r| r.values()[idx]).collect();
            if vals.is_empty() {
                continue;
            }
            let k = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / k;
            let sd = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            rows.push(PlotRow { mode, tau: f64::from_bits(bits), metric: name.to_string(), mean, sd, count: vals.len() });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rates_trivial_and_counted() {
        let truth = [true, false, true, false, false];
        assert_eq!(selection_rates(&truth, &truth).unwrap(), (1.0, 0.0));
        let flipped: Vec<bool> = truth.iter().map(|t| !t).collect();
        assert_eq!(selection_rates(&flipped, &truth).unwrap(), (0.0, 1.0));
        assert!(matches!(selection_rates(&[true], &[true]), Err(QdagError::UndefinedRate(_))));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Vec<bool> = (0..30).map(|_| rng.random()).collect();
        let s: Vec<bool> = (0..30).map(|_| rng.random()).collect();
        let (mut tp, mut p, mut fp, mut ng) = (0.0, 0.0, 0.0, 0.0);
        for k in 0..30 {
            if t[k] {
                p += 1.0;
                if s[k] {
                    tp += 1.0;
                }
            } else {
                ng += 1.0;
                if s[k] {
                    fp += 1.0;
                }
            }
        }
        assert_eq!(selection_rates(&s, &t).unwrap(), (tp / p, fp / ng));
    }

    fn pairwise_auc(scores: &[f64], truth: &[bool]) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for a in 0..scores.len() {
            for b in 0..scores.len() {
                if truth[a] && !truth[b] {
                    den += 1.0;
                    num += if scores[a] > scores[b] {
                        1.0
                    } else if scores[a] == scores[b] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[false, true, true, false]).unwrap(), 0.5);
        let scores = [0.3, 0.3, 0.9, 0.1, 0.5, 0.5, 0.7, 0.2, 0.3, 0.8];
        let truth = [true, false, true, false, true, false, false, false, true, true];
        assert_eq!(auc(&scores, &truth).unwrap(), pairwise_auc(&scores, &truth));
        assert!(auc(&[0.1], &[true]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
        let t: Vec<bool> = (0..1000).map(|_| rng.random()).collect();
        assert!((auc(&s, &t).unwrap() - 0.5).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn auc_matches_pairs_and_monotone_maps(
            raw in proptest::collection::vec((0u8..6, proptest::bool::ANY), 2..40)
        ) {
            let scores: Vec<f64> = raw.iter().map(|r| r.0 as f64 / 5.0).collect();
            let truth: Vec<bool> = raw.iter().map(|r| r.1).collect();
            if let Ok(a) = auc(&scores, &truth) {
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!((a - pairwise_auc(&scores, &truth)).abs() < 1e-12);
                let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
                prop_assert_eq!(auc(&mapped, &truth).unwrap(), a);
            }
        }

        #[test]
        fn norms_scale_linearly(d in proptest::collection::vec(-3.0f64..3.0, 18), c in 0.1f64..5.0) {
            let truth = Array3::<f64>::zeros((2, 3, 3));
            let est = Array3::from_shape_vec((2, 3, 3), d.clone()).unwrap();
            let scaled = est.mapv(|v| v * c);
            let (b1, t1) = estimation_norms(est.view(), truth.view(), est.view(), truth.view(), Mode::Oracle).unwrap();
            let (b2, _) = estimation_norms(scaled.view(), truth.view(), scaled.view(), truth.view(), Mode::Oracle).unwrap();
            prop_assert!((b2 - c * b1).abs() < 1e-10 * (1.0 + b2));
            prop_assert_eq!(b1, t1);
            prop_assert!((b1 == 0.0) == d.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn norm_formula_and_scaling() {
        let n = 4;
        let truth = Array3::<f64>::zeros((n, 3, 3));
        let mut est = truth.clone();
        est[[2, 0, 1]] = 0.6;
        let (b, _) = estimation_norms(est.view(), truth.view(), truth.view(), truth.view(), Mode::Oracle).unwrap();
        assert!((b - (0.36f64 / 4.0).sqrt()).abs() < 1e-15);
        let (bq, tq) = estimation_norms(est.view(), truth.view(), truth.view(), truth.view(), Mode::Qdagx).unwrap();
        assert!((bq - b / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(tq, 0.0);
        let wrong = Array3::<f64>::zeros((n, 3, 2));
        assert!(estimation_norms(est.view(), wrong.view(), est.view(), est.view(), Mode::Oracle).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Array3::from_shape_fn((5, 4, 4), |_| rng.random::<f64>());
        let z = Array3::from_shape_fn((5, 4, 4), |_| rng.random::<f64>());
        let mut ss = 0.0;
        for i in 0..5 {
            for h in 0..4 {
                for j in 0..4 {
                    ss += (a[[i, h, j]] - z[[i, h, j]]).powi(2);
                }
            }
        }
        let (got, _) = estimation_norms(a.view(), z.view(), a.view(), z.view(), Mode::Misspecified).unwrap();
        assert!((got - (ss / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mse_formula() {
        let n = 7;
        let truth = Array2::<f64>::zeros((n, 6));
        assert_eq!(adjusted_mse(truth.view(), truth.view()).unwrap(), 0.0);
        let mut est = truth.clone();
        est.column_mut(0).fill(1.0);
        assert_eq!(adjusted_mse(truth.view(), est.view()).unwrap(), 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = 13;
        let a = Array2::from_shape_fn((9, p), |_| rng.random::<f64>());
        let b = Array2::from_shape_fn((9, p), |_| rng.random::<f64>());
        let mut total = 0.0;
        for h1 in 1..=p {
            let den = std::cmp::max(1, (p - h1) / 5) + 1;
            let mut ss = 0.0;
            for i in 0..9 {
                ss += (a[[i, h1 - 1]] - b[[i, h1 - 1]]).powi(2);
            }
            total += ss / den as f64;
        }
        assert!((adjusted_mse(a.view(), b.view()).unwrap() - total / 9.0).abs() < 1e-12);
        assert!(adjusted_mse(a.view(), truth.view()).is_err());
    }

    #[test]
    fn node_averaging_skips_undefined() {
        let nodes = vec![
            (vec![true, false], vec![0.9, 0.1], vec![true, false]),
            (vec![true, true], vec![0.8, 0.2], vec![false, false]),
        ];
        let r = node_averaged_rates(&nodes).unwrap();
        assert_eq!(r.tpr, Some(1.0));
        assert_eq!(r.fpr, Some(0.5));
        assert_eq!(r.auc, Some(1.0));
    }

    #[test]
    fn plot_rows_summarize() {
        let mk = |tau: f64, v: f64| MetricReport {
            tau,
            tpr_y: Some(v),
            fpr_y: None,
            auc_y: Some(1.0),
            tpr_x: None,
            fpr_x: None,
            auc_x: None,
            norm_beta: v,
            norm_theta: 0.0,
            mse: 1.0,
        };
        let reports = vec![(Mode::Qdagx, mk(0.5, 1.0)), (Mode::Qdagx, mk(0.5, 3.0)), (Mode::Oracle, mk(0.1, 2.0))];
        let rows = plot_rows(&reports);
        let tpr = rows.iter().find(|r| r.mode == Mode::Qdagx && r.metric == "tpr_y").unwrap();
        assert_eq!((tpr.mean, tpr.count), (2.0, 2));
        assert!((tpr.sd - 2f64.sqrt()).abs() < 1e-15);
        assert!(rows.iter().all(|r| r.metric != "fpr_y"));
        assert_eq!(rows.iter().filter(|r| r.mode == Mode::Oracle).count(), 5);
        assert_eq!(rows[0].mode, Mode::Oracle);
    }
}
