//! Posterior edge and covariate probabilities, and FDR-calibrated calls.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};
use crate::exec::Execution;
use crate::model::ModelData;
use crate::prior::{PxhsGroup, threshold_value};
use crate::sampler::PosteriorDraws;

pub const DEFAULT_FDR: f64 = 0.10;

/// Thresholds 0.01, 0.02, ..., 0.99.
pub fn fdr_grid() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}

/// Horseshoe pseudo-probability `1 − 1/(1 + T²L²)`.
pub fn inclusion_probability(t: f64, l: f64) -> f64 {
    inclusion_from_squares(t * t, l * l)
}

pub fn inclusion_from_squares(t2: f64, l2: f64) -> f64 {
    let s = t2 * l2;
    if s.is_infinite() {
        1.0
    } else {
        s / (1.0 + s)
    }
}

/// `probs[[i, h, j]]`: share of draws in which `β_hj(X_i)` is nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgePosterior {
    pub tau: f64,
    pub probs: Array3<f64>,
}

/// `probs[[h, j, k]]`: larger of the linear and non-linear inclusion rates of
/// covariate `k` on edge `h ← j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariatePosterior {
    pub tau: f64,
    pub probs: Array3<f64>,
    pub linear: Array3<f64>,
    pub nonlinear: Array3<f64>,
}

fn edge_terms(draws: &PosteriorDraws) -> Vec<(usize, usize, usize)> {
    draws.terms.iter().enumerate().filter_map(|(e, k)| k.parent.map(|j| (e, k.child, j))).collect()
}

pub fn edge_posterior_probs(draws: &PosteriorDraws, data: &ModelData, exec: Execution) -> Result<EdgePosterior> {
    if draws.is_empty() {
        return Err(QdagError::EmptyArchive);
    }
    let (n, p) = (data.n(), data.p());
    if p != draws.p {
        return Err(QdagError::Dimension(format!("archive has {} nodes, data {p}", draws.p)));
    }
    let counts = exec.map(edge_terms(draws), |(e, h, j)| -> Result<(usize, usize, Vec<u32>)> {
        let mut c = vec![0u32; n];
        for d in &draws.draws {
            let params = &d.params[e];
            for (ci, th) in c.iter_mut().zip(data.theta(params)?) {
                if threshold_value(th, params.threshold) != 0.0 {
                    *ci += 1;
                }
            }
        }
        Ok((h, j, c))
    });
    let total = draws.len() as f64;
    let mut probs = Array3::<f64>::zeros((n, p, p));
    for r in counts {
        let (h, j, c) = r?;
        for (i, &ci) in c.iter().enumerate() {
            probs[[i, h, j]] = ci as f64 / total;
        }
    }
    Ok(EdgePosterior { tau: draws.tau.value(), probs })
}

fn mean_rates(draws: &PosteriorDraws, e: usize, pick: fn(&crate::prior::EdgeParamBlock) -> &PxhsGroup) -> Vec<f64> {
    let q = pick(&draws.draws[0].params[e]).blocks.len();
    let mut acc = vec![0.0; q];
    for d in &draws.draws {
        let g = pick(&d.params[e]);
        for (a, b) in acc.iter_mut().zip(&g.blocks) {
            *a += inclusion_from_squares(g.global2, b.local2);
        }
    }
    acc.iter().map(|a| a / draws.len() as f64).collect()
}

pub fn covariate_posterior_probs(draws: &PosteriorDraws) -> Result<CovariatePosterior> {
    if draws.is_empty() {
        return Err(QdagError::EmptyArchive);
    }
    let p = draws.p;
    let q = draws.reduced_dims.len();
    let mut linear = Array3::<f64>::zeros((p, p, q));
    let mut nonlinear = Array3::<f64>::zeros((p, p, q));
    for (e, h, j) in edge_terms(draws) {
        let lin = mean_rates(draws, e, |b| &b.linear);
        let nl = mean_rates(draws, e, |b| &b.nonlinear);
        for k in 0..q {
            linear[[h, j, k]] = lin[k];
            nonlinear[[h, j, k]] = nl[k];
        }
    }
    let probs = ndarray::Zip::from(&linear).and(&nonlinear).map_collect(|a, b| a.max(*b));
    Ok(CovariatePosterior { tau: draws.tau.value(), probs, linear, nonlinear })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdrSelection {
    pub threshold: f64,
    pub selected: Vec<bool>,
    /// Truth-based FDR when truth was supplied, Bayesian FDR otherwise.
    pub achieved_fdr: f64,
}

/// False discovery proportion of the calls `p ≥ t`.
pub fn truth_fdr(probs: &[f64], truth: &[bool], t: f64) -> f64 {
    let (mut sel, mut fp) = (0usize, 0usize);
    for (&p, &tr) in probs.iter().zip(truth) {
        if p >= t {
            sel += 1;
            if !tr {
                fp += 1;
            }
        }
    }
    fp as f64 / sel.max(1) as f64
}

/// `Σ_{p ≥ t} (1 − p) / max(1, #{p ≥ t})`.
pub fn bayesian_fdr(probs: &[f64], t: f64) -> f64 {
    let (mut sel, mut miss) = (0usize, 0.0);
    for &p in probs {
        if p >= t {
            sel += 1;
            miss += 1.0 - p;
        }
    }
    miss / sel.max(1) as f64
}

/// Picks a grid threshold and selects `p ≥ threshold`.
///
/// With truth, the threshold whose FDR is closest to `target` wins, the
/// smaller threshold on ties. Without truth, the smallest threshold whose
/// Bayesian FDR is at most `target`, or 1 if none is.
pub fn fdr_select(probs: &[f64], truth: Option<&[bool]>, target: f64) -> Result<FdrSelection> {
    if probs.is_empty() {
        return Err(QdagError::Input("no probabilities to select from".into()));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(QdagError::Input(format!("FDR target must lie in (0, 1), got {target}")));
    }
    if let Some(&bad) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(QdagError::Input(format!("probability {bad} outside [0, 1]")));
    }
    let grid = fdr_grid();
    let (threshold, achieved_fdr) = match truth {
        Some(truth) => {
            if truth.len() != probs.len() {
                return Err(QdagError::Dimension(format!("{} probabilities, {} truth flags", probs.len(), truth.len())));
            }
            let mut best = (grid[0], truth_fdr(probs, truth, grid[0]));
            for &t in &grid[1..] {
                let f = truth_fdr(probs, truth, t);
                if (f - target).abs() < (best.1 - target).abs() {
                    best = (t, f);
                }
            }
            best
        }
        None => grid
            .iter()
            .map(|&t| (t, bayesian_fdr(probs, t)))
            .find(|(_, f)| *f <= target)
            .unwrap_or((1.0, bayesian_fdr(probs, 1.0))),
    };
    let selected = probs.iter().map(|&p| p >= threshold).collect();
    Ok(FdrSelection { threshold, selected, achieved_fdr })
}

/// Calls pooled per child node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSelection<A> {
    pub selected: A,
    pub thresholds: Vec<f64>,
    pub achieved_fdr: Vec<f64>,
}

/// Selects edges `h ← j` for node `h` from the pooled probabilities over
/// all individuals and all `j ≠ h`.
pub fn select_edges(
    post: &EdgePosterior,
    truth: Option<&Array3<bool>>,
    target: f64,
) -> Result<NodeSelection<Array3<bool>>> {
    let (n, p, _) = post.probs.dim();
    if let Some(t) = truth {
        if t.dim() != post.probs.dim() {
            return Err(QdagError::Dimension(format!("truth {:?} vs probabilities {:?}", t.dim(), post.probs.dim())));
        }
    }
    let mut selected = Array3::from_elem((n, p, p), false);
    let (mut thresholds, mut achieved) = (vec![f64::NAN; p], vec![f64::NAN; p]);
    for h in 0..p {
        let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..p).filter(move |&j| j != h).map(move |j| (i, j))).collect();
        if cells.is_empty() {
            continue;
        }
        let probs: Vec<f64> = cells.iter().map(|&(i, j)| post.probs[[i, h, j]]).collect();
        let tr: Option<Vec<bool>> = truth.map(|t| cells.iter().map(|&(i, j)| t[[i, h, j]]).collect());
        let s = fdr_select(&probs, tr.as_deref(), target)?;
        for (&(i, j), &on) in cells.iter().zip(&s.selected) {
            selected[[i, h, j]] = on;
        }
        thresholds[h] = s.threshold;
        achieved[h] = s.achieved_fdr;
    }
    Ok(NodeSelection { selected, thresholds, achieved_fdr: achieved })
}

/// Selects covariate effects on edges into node `h`, pooled over all
/// `j ≠ h` and covariates.
pub fn select_covariates(
    post: &CovariatePosterior,
    truth: Option<&Array3<bool>>,
    target: f64,
) -> Result<NodeSelection<Array3<bool>>> {
    let (p, _, q) = post.probs.dim();
    if let Some(t) = truth {
        if t.dim() != post.probs.dim() {
            return Err(QdagError::Dimension(format!("truth {:?} vs probabilities {:?}", t.dim(), post.probs.dim())));
        }
    }
    let mut selected = Array3::from_elem((p, p, q), false);
    let (mut thresholds, mut achieved) = (vec![f64::NAN; p], vec![f64::NAN; p]);
    for h in 0..p {
        let cells: Vec<(usize, usize)> = (0..p).filter(|&j| j != h).flat_map(|j| (0..q).map(move |k| (j, k))).collect();
        if cells.is_empty() {
            continue;
        }
        let probs: Vec<f64> = cells.iter().map(|&(j, k)| post.probs[[h, j, k]]).collect();
        let tr: Option<Vec<bool>> = truth.map(|t| cells.iter().map(|&(j, k)| t[[h, j, k]]).collect());
        let s = fdr_select(&probs, tr.as_deref(), target)?;
        for (&(j, k), &on) in cells.iter().zip(&s.selected) {
            selected[[h, j, k]] = on;
        }
        thresholds[h] = s.threshold;
        achieved[h] = s.achieved_fdr;
    }
    Ok(NodeSelection { selected, thresholds, achieved_fdr: achieved })
}

/// Individual adjacency `[i, h, j]` from selected edges, as an `n × p²`
/// table for export.
pub fn flatten_individuals(sel: &Array3<bool>) -> Array2<u8> {
    let (n, p, _) = sel.dim();
    Array2::from_shape_fn((n, p * p), |(i, c)| sel[[i, c / p, c % p]] as u8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EdgeKey, SplineSettings};
    use crate::prior::{EdgeParamBlock, PxhsBlock};
    use crate::quantile_loss::QuantileLevel;
    use crate::sampler::{AcceptCounts, Mode, QuantileDagDraw, SamplerConfig};
    use crate::graph::Adjacency;
    use proptest::prelude::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inclusion_values() {
        assert_eq!(inclusion_probability(1.0, 1.0), 0.5);
        assert!((inclusion_probability(2.0, 1.0) - 0.8).abs() < 1e-15);
        assert!(inclusion_probability(1e-9, 1.0) < 1e-17);
        assert_eq!(inclusion_from_squares(f64::INFINITY, 1.0), 1.0);
    }

    proptest! {
        #[test]
        fn inclusion_increases(t in 1e-3f64..1e3, l in 1e-3f64..1e3, f in 1.01f64..10.0) {
            let base = inclusion_probability(t, l);
            prop_assert!(base > 0.0 && base < 1.0);
            prop_assert!(inclusion_probability(t * f, l) > base || base > 1.0 - 1e-12);
            prop_assert!(inclusion_probability(t, l * f) > base || base > 1.0 - 1e-12);
        }

        #[test]
        fn raising_threshold_never_adds(probs in proptest::collection::vec(0.0f64..=1.0, 1..60), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let sel = |t: f64| probs.iter().map(|p| *p >= t).collect::<Vec<_>>();
            for (h, l) in sel(hi).into_iter().zip(sel(lo)) {
                prop_assert!(!h || l);
            }
            let bl = bayesian_fdr(&probs, lo);
            let bh = bayesian_fdr(&probs, hi);
            let any_hi = probs.iter().any(|p| *p >= hi);
            prop_assert!(!any_hi || bh <= bl + 1e-12);
        }

        #[test]
        fn selection_is_threshold_rule(probs in proptest::collection::vec(0.0f64..=1.0, 1..60), target in 0.01f64..0.5) {
            let s = fdr_select(&probs, None, target).unwrap();
            prop_assert!(s.achieved_fdr <= target);
            for (p, on) in probs.iter().zip(&s.selected) {
                prop_assert!(*on == (*p >= s.threshold));
            }
        }
    }

    #[test]
    fn perfect_posterior_picks_first_threshold() {
        let truth = [true, false, true, true, false];
        let probs: Vec<f64> = truth.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        let s = fdr_select(&probs, Some(&truth), 0.1).unwrap();
        assert_eq!(s.threshold, 0.01);
        assert_eq!(s.selected, truth.to_vec());
        assert_eq!(s.achieved_fdr, 0.0);
    }

    #[test]
    fn uniform_bayesian_case() {
        let probs = vec![0.95; 12];
        let s = fdr_select(&probs, None, 0.1).unwrap();
        assert!(s.selected.iter().all(|&b| b));
        assert!((s.achieved_fdr - 0.05).abs() < 1e-12);
        let strict = fdr_select(&[0.995, 0.5, 1.0], None, 0.001).unwrap();
        assert_eq!(strict.threshold, 1.0);
        assert_eq!(strict.selected, vec![false, false, true]);
        assert!(fdr_select(&[], None, 0.1).is_err());
        assert!(fdr_select(&[0.5], None, 1.0).is_err());
        assert!(fdr_select(&[1.5], None, 0.1).is_err());
    }

    #[test]
    fn truth_mode_matches_grid_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let truth: Vec<bool> = (0..20).map(|_| rng.random::<bool>()).collect();
            let probs: Vec<f64> = truth.iter().map(|&t| (rng.random::<f64>() + if t { 0.4 } else { 0.0 }).min(1.0)).collect();
            let s = fdr_select(&probs, Some(&truth), 0.1).unwrap();
            // exhaustive scan written from scratch
            let mut best_t = 0.0;
            let mut best_gap = f64::INFINITY;
            let mut best_fdr = 0.0;
            for k in 1..100 {
                let t = k as f64 / 100.0;
                let chosen: Vec<usize> = (0..20).filter(|&e| probs[e] >= t).collect();
                let fdr = if chosen.is_empty() {
                    0.0
                } else {
                    chosen.iter().filter(|&&e| !truth[e]).count() as f64 / chosen.len() as f64
                };
                if (fdr - 0.1).abs() < best_gap {
                    best_gap = (fdr - 0.1).abs();
                    best_t = t;
                    best_fdr = fdr;
                }
            }
            assert_eq!(s.threshold, best_t);
            assert_eq!(s.achieved_fdr, best_fdr);
        }
    }

    fn draws_with(params: Vec<Vec<EdgeParamBlock>>, terms: Vec<EdgeKey>, p: usize, q: usize) -> PosteriorDraws {
        PosteriorDraws {
            tau: QuantileLevel::new(0.5).unwrap(),
            config: SamplerConfig::new(Mode::Qdagx),
            terms,
            draws: params
                .into_iter()
                .map(|ps| QuantileDagDraw { params: ps, union: Adjacency::empty(p), node_loglik: vec![0.0; p] })
                .collect(),
            acceptance: AcceptCounts::default(),
            p,
            reduced_dims: vec![1; q],
        }
    }

    fn block(global2: f64, local2: &[f64]) -> PxhsGroup {
        PxhsGroup {
            global2,
            c: 1.0,
            blocks: local2.iter().map(|&l2| PxhsBlock { eta: 0.0, xi: vec![0.0], m: vec![1], local2: l2, zeta: 1.0 }).collect(),
        }
    }

    #[test]
    fn edge_probability_counts() {
        // no covariates: θ = μ, so the edge is on exactly when |μ| > t
        let n = 4;
        let y = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        let data = ModelData::new(y, Array2::zeros((n, 0)), SplineSettings::default()).unwrap();
        let terms = vec![EdgeKey::intercept(0), EdgeKey::edge(0, 1), EdgeKey::intercept(1)];
        let on = [true, false, true, true, false, false, true, false, false, false];
        let params: Vec<Vec<EdgeParamBlock>> = on
            .iter()
            .map(|&o| {
                let mut e = EdgeParamBlock::initial(&[], 1.0);
                e.mu = if o { 2.0 } else { 0.5 };
                vec![EdgeParamBlock::initial(&[], 0.0), e, EdgeParamBlock::initial(&[], 0.0)]
            })
            .collect();
        let draws = draws_with(params, terms, 2, 0);
        let post = edge_posterior_probs(&draws, &data, Execution::Parallel).unwrap();
        for i in 0..n {
            assert_eq!(post.probs[[i, 0, 1]], 0.4);
            assert_eq!(post.probs[[i, 1, 0]], 0.0);
            assert_eq!(post.probs[[i, 0, 0]], 0.0);
        }
        let empty = draws_with(vec![], vec![], 2, 0);
        assert!(matches!(edge_posterior_probs(&empty, &data, Execution::Sequential), Err(QdagError::EmptyArchive)));
        assert!(covariate_posterior_probs(&empty).is_err());
    }

    #[test]
    fn covariate_rates_average_then_max() {
        let terms = vec![EdgeKey::intercept(0), EdgeKey::edge(0, 1), EdgeKey::intercept(1)];
        let scales = [
            // (nonlinear T², L²s), (linear T², L²s)
            ((1.0, [1.0, 4.0]), (9.0, [1.0, 0.01])),
            ((0.25, [4.0, 1.0]), (1.0, [1.0, 1.0])),
            ((2.0, [0.5, 0.5]), (4.0, [0.25, 2.0])),
        ];
        let params: Vec<Vec<EdgeParamBlock>> = scales
            .iter()
            .map(|&((nt, nl), (lt, ll))| {
                let mut e = EdgeParamBlock::initial(&[1, 1], 1.0);
                e.nonlinear = block(nt, &nl);
                e.linear = block(lt, &ll);
                vec![EdgeParamBlock::initial(&[1, 1], 0.0), e, EdgeParamBlock::initial(&[1, 1], 0.0)]
            })
            .collect();
        let draws = draws_with(params, terms, 2, 2);
        let post = covariate_posterior_probs(&draws).unwrap();
        for k in 0..2 {
            let rate = |t2: f64, l2: f64| t2 * l2 / (1.0 + t2 * l2);
            let nl: f64 = scales.iter().map(|((t, l), _)| rate(*t, l[k])).sum::<f64>() / 3.0;
            let lin: f64 = scales.iter().map(|(_, (t, l))| rate(*t, l[k])).sum::<f64>() / 3.0;
            assert!((post.nonlinear[[0, 1, k]] - nl).abs() < 1e-15);
            assert!((post.linear[[0, 1, k]] - lin).abs() < 1e-15);
            assert_eq!(post.probs[[0, 1, k]], nl.max(lin));
            assert_eq!(post.probs[[1, 0, k]], 0.0);
        }
    }

    #[test]
    fn node_pooled_selection() {
        let mut probs = Array3::<f64>::zeros((3, 3, 3));
        let mut truth = Array3::from_elem((3, 3, 3), false);
        for i in 0..3 {
            probs[[i, 0, 1]] = 0.9;
            truth[[i, 0, 1]] = true;
            probs[[i, 1, 2]] = 0.3;
            truth[[i, 1, 2]] = true;
            probs[[i, 1, 1]] = 1.0;
        }
        let post = EdgePosterior { tau: 0.5, probs };
        let s = select_edges(&post, Some(&truth), 0.1).unwrap();
        for i in 0..3 {
            assert!(s.selected[[i, 0, 1]]);
            assert!(s.selected[[i, 1, 2]]);
            assert!(!s.selected[[i, 1, 1]]);
            assert!(!s.selected[[i, 0, 2]]);
        }
        assert_eq!(s.thresholds[0], 0.01);
        let flat = flatten_individuals(&s.selected);
        assert_eq!(flat.dim(), (3, 9));
        assert_eq!(flat[[0, 1]], 1);
        assert_eq!(flat[[0, 5]], 1);
        assert_eq!(flat.sum(), 6);
    }
}
