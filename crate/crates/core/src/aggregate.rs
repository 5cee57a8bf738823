//! Population summaries of individual quantile DAGs: one representative
//! draw per individual, mean adjacency per level, hubs and prevalent edges.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{QdagError, Result};
use crate::exec::Execution;
use crate::graph::Adjacency;
use crate::model::ModelData;
use crate::prior::threshold_value;
use crate::sampler::PosteriorDraws;

pub const DEFAULT_HUB_TOP_K: usize = 3;
pub const DEFAULT_HUB_MIN_QUANTILES: usize = 4;
pub const DEFAULT_PATIENT_FRAC: f64 = 0.5;
pub const DEFAULT_PREVALENCE_MIN_QUANTILES: usize = 5;

/// Index of the draw whose adjacency is closest in Frobenius norm to the
/// mean adjacency; the earliest wins ties.
pub fn representative_draw(adjs: &[Adjacency]) -> Result<usize> {
    let first = adjs.first().ok_or(QdagError::EmptyArchive)?;
    let p = first.p();
    if adjs.iter().any(|a| a.p() != p) {
        return Err(QdagError::Dimension("draws disagree in node count".into()));
    }
    let mut counts = Array2::<usize>::zeros((p, p));
    for a in adjs {
        for (h, j) in a.edges() {
            counts[[h, j]] += 1;
        }
    }
    let mean = counts.mapv(|c| c as f64 / adjs.len() as f64);
    let mut best = (0, f64::INFINITY);
    for (d, a) in adjs.iter().enumerate() {
        let mut dist = 0.0;
        for h in 0..p {
            for j in 0..p {
                let v = if a.has_edge(h, j) { 1.0 } else { 0.0 };
                dist += (v - mean[[h, j]]).powi(2);
            }
        }
        if dist < best.1 {
            best = (d, dist);
        }
    }
    Ok(best.0)
}

/// Per individual, the index of its representative draw and that draw's
/// individual adjacency.
pub fn representatives(draws: &PosteriorDraws, data: &ModelData, exec: Execution) -> Result<Vec<(usize, Adjacency)>> {
    if draws.is_empty() {
        return Err(QdagError::EmptyArchive);
    }
    let n = data.n();
    let edges: Vec<(usize, usize, usize)> =
        draws.terms.iter().enumerate().filter_map(|(e, k)| k.parent.map(|j| (e, k.child, j))).collect();
    // on[edge][draw][i]
    let on: Vec<Vec<Vec<bool>>> = exec
        .map(edges.clone(), |(e, _, _)| -> Result<Vec<Vec<bool>>> {
            draws
                .draws
                .iter()
                .map(|d| {
                    let pr = &d.params[e];
                    Ok(data.theta(pr)?.into_iter().map(|t| threshold_value(t, pr.threshold) != 0.0).collect())
                })
                .collect()
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let per_individual = exec.map((0..n).collect(), |i| -> Result<(usize, Adjacency)> {
        let adjs: Vec<Adjacency> = (0..draws.len())
            .map(|d| {
                let mut a = Adjacency::empty(draws.p);
                for (k, &(_, h, j)) in edges.iter().enumerate() {
                    if on[k][d][i] {
                        a.set(h, j, true)?;
                    }
                }
                Ok(a)
            })
            .collect::<Result<_>>()?;
        let d = representative_draw(&adjs)?;
        Ok((d, adjs[d].clone()))
    });
    per_individual.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedDag {
    pub tau: f64,
    pub n: usize,
    /// Share of individuals with edge `h ← j`.
    pub weights: Array2<f64>,
}

pub fn aggregate_dags(tau: f64, reps: &[Adjacency]) -> Result<AggregatedDag> {
    let first = reps.first().ok_or_else(|| QdagError::Input("no individual DAGs to aggregate".into()))?;
    let p = first.p();
    let mut counts = Array2::<usize>::zeros((p, p));
    for a in reps {
        if a.p() != p {
            return Err(QdagError::Dimension("individual DAGs disagree in node count".into()));
        }
        for (h, j) in a.edges() {
            counts[[h, j]] += 1;
        }
    }
    let n = reps.len();
    Ok(AggregatedDag { tau, n, weights: counts.mapv(|c| c as f64 / n as f64) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Degree {
    /// Number of parents, a row sum.
    In,
    /// Number of children, a column sum.
    Out,
}

impl std::str::FromStr for Degree {
    type Err = QdagError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in" => Ok(Degree::In),
            "out" => Ok(Degree::Out),
            other => Err(QdagError::Input(format!("degree must be 'in' or 'out', got '{other}'"))),
        }
    }
}

pub fn weighted_degree(agg: &AggregatedDag, degree: Degree) -> Vec<f64> {
    let axis = match degree {
        Degree::In => ndarray::Axis(1),
        Degree::Out => ndarray::Axis(0),
    };
    agg.weights.sum_axis(axis).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HubEntry {
    pub node: usize,
    /// Levels at which the node ranks in the top `k`.
    pub appearances: usize,
    pub degree_sum: f64,
}

/// Nodes ranked in the top `top_k` by weighted degree at `min_quantiles` or
/// more levels, by appearances and then degree summed over levels. Equal
/// degrees at one level rank by node index.
pub fn hub_rank(aggs: &[AggregatedDag], degree: Degree, top_k: usize, min_quantiles: usize) -> Vec<HubEntry> {
    let Some(first) = aggs.first() else { return Vec::new() };
    let p = first.weights.nrows();
    let mut appearances = vec![0usize; p];
    let mut sums = vec![0.0; p];
    for agg in aggs {
        let deg = weighted_degree(agg, degree);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| deg[b].total_cmp(&deg[a]).then(a.cmp(&b)));
        for &v in order.iter().take(top_k) {
            appearances[v] += 1;
        }
        for (s, d) in sums.iter_mut().zip(&deg) {
            *s += d;
        }
    }
    let mut hubs: Vec<HubEntry> = (0..p)
        .filter(|&v| appearances[v] >= min_quantiles)
        .map(|v| HubEntry { node: v, appearances: appearances[v], degree_sum: sums[v] })
        .collect();
    hubs.sort_by(|a, b| {
        b.appearances.cmp(&a.appearances).then(b.degree_sum.total_cmp(&a.degree_sum)).then(a.node.cmp(&b.node))
    });
    hubs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalentEdge {
    pub child: usize,
    pub parent: usize,
    /// Levels at which the edge reaches the prevalence cutoff.
    pub taus: Vec<f64>,
}

/// Edges present in at least `patient_frac` of individuals at
/// `min_quantiles` or more levels.
pub fn edge_prevalence(aggs: &[AggregatedDag], patient_frac: f64, min_quantiles: usize) -> Vec<PrevalentEdge> {
    let Some(first) = aggs.first() else { return Vec::new() };
    let p = first.weights.nrows();
    let mut out = Vec::new();
    for h in 0..p {
        for j in 0..p {
            let taus: Vec<f64> = aggs.iter().filter(|a| a.weights[[h, j]] >= patient_frac).map(|a| a.tau).collect();
            if !taus.is_empty() && taus.len() >= min_quantiles {
                out.push(PrevalentEdge { child: h, parent: j, taus });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert_eq, proptest};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn adj(p: usize, edges: &[(usize, usize)]) -> Adjacency {
        Adjacency::from_edges(p, edges).unwrap()
    }

    #[test]
    fn representative_cases() {
        let a = adj(3, &[(0, 1)]);
        assert_eq!(representative_draw(&[a.clone(), a.clone(), a.clone()]).unwrap(), 0);
        assert!(representative_draw(&[]).is_err());

        let draws = [adj(3, &[(0, 1), (1, 2)]), adj(3, &[(0, 1)]), adj(3, &[(0, 2), (1, 2)])];
        // mean: (0,1) 2/3, (1,2) 2/3, (0,2) 1/3
        let mean = |h: usize, j: usize| draws.iter().filter(|d| d.has_edge(h, j)).count() as f64 / 3.0;
        let dists: Vec<f64> = draws
            .iter()
            .map(|d| {
                let mut s = 0.0;
                for h in 0..3 {
                    for j in 0..3 {
                        s += (d.has_edge(h, j) as u8 as f64 - mean(h, j)).powi(2);
                    }
                }
                s
            })
            .collect();
        let best = (0..3).min_by(|&x, &y| dists[x].total_cmp(&dists[y])).unwrap();
        assert_eq!(representative_draw(&draws).unwrap(), best);
        assert_eq!(best, 0);
        // two equidistant draws: the earlier one wins
        let tie = [adj(2, &[(0, 1)]), adj(2, &[])];
        assert_eq!(representative_draw(&tie).unwrap(), 0);
    }

    #[test]
    fn representatives_follow_individual_graphs() {
        use crate::model::SplineSettings;
        use crate::quantile_loss::QuantileLevel;
        use crate::sampler::{run_chain, Mode, SamplerConfig};
        use rand_distr::{Distribution, StandardNormal};

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let n = 25;
        let x = Array2::from_shape_fn((n, 1), |_| StandardNormal.sample(&mut rng));
        let mut y = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            let z: [f64; 3] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
            y[[i, 2]] = z[2];
            y[[i, 1]] = z[1] + y[[i, 2]] * (1.0 + x[[i, 0]]);
            y[[i, 0]] = z[0] + y[[i, 1]];
        }
        let data = ModelData::new(y, x, SplineSettings { num_basis: 8, ..Default::default() }).unwrap();
        let cfg = SamplerConfig::new(Mode::Qdagx).with_schedule(400, 200, 10).with_seed(2);
        let draws = run_chain(&data, QuantileLevel::new(0.5).unwrap(), &cfg).unwrap();
        let sets: Vec<_> = (0..draws.len()).map(|d| draws.dag_set(&data, d).unwrap()).collect();
        let reps = representatives(&draws, &data, Execution::Parallel).unwrap();
        assert_eq!(reps, representatives(&draws, &data, Execution::Sequential).unwrap());
        for (i, (d, a)) in reps.iter().enumerate() {
            let own: Vec<Adjacency> = sets.iter().map(|s| s.per_individual[i].clone()).collect();
            assert_eq!(*d, representative_draw(&own).unwrap());
            assert_eq!(a, &own[*d]);
        }
    }

    #[test]
    fn aggregation() {
        let agg = aggregate_dags(0.5, &[adj(3, &[(0, 1)]), adj(3, &[(1, 2)])]).unwrap();
        assert_eq!(agg.weights[[0, 1]], 0.5);
        assert_eq!(agg.weights[[1, 2]], 0.5);
        assert_eq!(agg.weights.sum(), 1.0);
        let same = aggregate_dags(0.5, &vec![adj(3, &[(0, 2)]); 4]).unwrap();
        assert!(same.weights.iter().all(|w| *w == 0.0 || *w == 1.0));
        assert!(aggregate_dags(0.5, &[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let reps: Vec<Adjacency> = (0..5)
            .map(|_| {
                let e: Vec<(usize, usize)> = (0..4)
                    .flat_map(|h| ((h + 1)..4).map(move |j| (h, j)))
                    .filter(|_| rng.random::<bool>())
                    .collect();
                adj(4, &e)
            })
            .collect();
        let agg = aggregate_dags(0.1, &reps).unwrap();
        for h in 0..4 {
            for j in 0..4 {
                let c = reps.iter().filter(|r| r.has_edge(h, j)).count();
                assert_eq!(agg.weights[[h, j]], c as f64 / 5.0);
            }
        }
        let single = aggregate_dags(0.1, &reps[..1]).unwrap();
        for h in 0..4 {
            for j in 0..4 {
                assert_eq!(single.weights[[h, j]], reps[0].has_edge(h, j) as u8 as f64);
            }
        }
    }

    fn weights_agg(tau: f64, w: Array2<f64>) -> AggregatedDag {
        AggregatedDag { tau, n: 10, weights: w }
    }

    #[test]
    fn hubs() {
        // node 2 has the most parents at every level
        let aggs: Vec<AggregatedDag> = (1..=9)
            .map(|t| {
                let mut w = Array2::<f64>::zeros((5, 5));
                w[[2, 0]] = 1.0;
                w[[2, 1]] = 1.0;
                w[[2, 3]] = 0.9;
                w[[0, 1]] = 0.1 * t as f64;
                w[[4, 3]] = 0.5;
                weights_agg(t as f64 / 10.0, w)
            })
            .collect();
        let hubs = hub_rank(&aggs, Degree::In, 3, 4);
        assert_eq!(hubs[0].node, 2);
        assert_eq!(hubs[0].appearances, 9);

        // node 3 is top-3 in out-degree at exactly three levels
        let aggs: Vec<AggregatedDag> = (0..9)
            .map(|t| {
                let mut w = Array2::<f64>::zeros((5, 5));
                w[[1, 0]] = 1.0;
                w[[2, 1]] = 0.9;
                w[[3, 2]] = 0.8;
                if t < 3 {
                    w[[4, 3]] = 0.95;
                }
                weights_agg(0.1 * (t + 1) as f64, w)
            })
            .collect();
        let hubs = hub_rank(&aggs, Degree::Out, 3, 4);
        assert!(hubs.iter().all(|h| h.node != 3));
        assert!(hub_rank(&aggs, Degree::Out, 3, 3).iter().any(|h| h.node == 3));
    }

    /// Enumeration oracle: count top-k memberships directly from sorted
    /// (degree, node) pairs.
    #[test]
    fn hubs_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let aggs: Vec<AggregatedDag> = (0..9)
                .map(|t| {
                    let w = Array2::from_shape_fn((5, 5), |(h, j)| if h == j { 0.0 } else { (rng.random_range(0..5) as f64) / 4.0 });
                    weights_agg(0.1 * (t + 1) as f64, w)
                })
                .collect();
            let mut app = [0usize; 5];
            for a in &aggs {
                let mut pairs: Vec<(f64, usize)> = (0..5).map(|v| ((0..5).map(|j| a.weights[[v, j]]).sum(), v)).collect();
                pairs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
                for &(_, v) in &pairs[..3] {
                    app[v] += 1;
                }
            }
            let mut expected: Vec<usize> = (0..5).filter(|&v| app[v] >= 4).collect();
            let got = hub_rank(&aggs, Degree::In, 3, 4);
            let mut got_nodes: Vec<usize> = got.iter().map(|h| h.node).collect();
            expected.sort();
            got_nodes.sort();
            assert_eq!(got_nodes, expected);
            for w in got.windows(2) {
                assert!(w[0].appearances >= w[1].appearances);
            }
        }
    }

    #[test]
    fn prevalence() {
        let full: Vec<AggregatedDag> = (0..9)
            .map(|t| aggregate_dags(0.1 * (t + 1) as f64, &vec![adj(3, &[(0, 1)]); 3]).unwrap())
            .collect();
        let e = edge_prevalence(&full, 0.5, 5);
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].child, e[0].parent, e[0].taus.len()), (0, 1, 9));

        let four: Vec<AggregatedDag> = (0..9)
            .map(|t| {
                let reps = if t < 4 { vec![adj(3, &[(0, 1)]), adj(3, &[])] } else { vec![adj(3, &[]); 2] };
                aggregate_dags(0.1 * (t + 1) as f64, &reps).unwrap()
            })
            .collect();
        assert!(edge_prevalence(&four, 0.5, 5).is_empty());
        assert_eq!(edge_prevalence(&four, 0.5, 4).len(), 1);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let per_tau: Vec<Vec<Adjacency>> = (0..9)
            .map(|_| {
                (0..4)
                    .map(|_| {
                        let e: Vec<(usize, usize)> =
                            [(0, 1), (0, 2), (1, 2)].into_iter().filter(|_| rng.random::<f64>() < 0.6).collect();
                        adj(3, &e)
                    })
                    .collect()
            })
            .collect();
        let aggs: Vec<AggregatedDag> =
            per_tau.iter().enumerate().map(|(t, r)| aggregate_dags(0.1 * (t + 1) as f64, r).unwrap()).collect();
        let got = edge_prevalence(&aggs, 0.5, 5);
        for (h, j) in [(0, 1), (0, 2), (1, 2)] {
            let levels = per_tau.iter().filter(|r| r.iter().filter(|a| a.has_edge(h, j)).count() * 2 >= 4).count();
            assert_eq!(got.iter().any(|e| (e.child, e.parent) == (h, j)), levels >= 5);
        }
    }

    proptest! {
        #[test]
        fn patient_order_does_not_matter(
            sets in proptest::collection::vec(proptest::collection::vec(proptest::bool::ANY, 3), 1..8),
            seed in 0u64..1000,
        ) {
            let reps: Vec<Adjacency> = sets
                .iter()
                .map(|b| {
                    let e: Vec<(usize, usize)> =
                        [(0, 1), (0, 2), (1, 2)].into_iter().zip(b).filter(|(_, on)| **on).map(|(e, _)| e).collect();
                    adj(3, &e)
                })
                .collect();
            let mut shuffled = reps.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a: Vec<AggregatedDag> = (0..9).map(|t| aggregate_dags(t as f64, &reps).unwrap()).collect();
            let b: Vec<AggregatedDag> = (0..9).map(|t| aggregate_dags(t as f64, &shuffled).unwrap()).collect();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(hub_rank(&a, Degree::In, 3, 4), hub_rank(&b, Degree::In, 3, 4));
            prop_assert_eq!(edge_prevalence(&a, 0.5, 5), edge_prevalence(&b, 0.5, 5));
        }
    }
}
