//! Joint-distribution ("getting it right") check of the sampler.
//!
//! The marginal-conditional simulator draws parameters from the prior
//! (restricted to acyclic union graphs) and then responses from the working
//! likelihood. The successive-conditional simulator alternates sampler
//! sweeps given the responses with fresh responses given the parameters.
//! Both target the same joint law, so every test function must have the
//! same mean under both.
//!
//! Horseshoe tails put a sizeable share of prior mass on coefficients in the
//! hundreds, where twenty observations pin `θ` tightly and a single
//! successive chain would need far more rounds than available to leave. The
//! successive simulator is therefore run as independent short replicates,
//! each started from its own marginal-conditional draw; such a start is
//! exactly stationary, so every round is a joint draw when the kernel is
//! correct, and replicate means give independent batches for the standard
//! error.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::chain::{Chain, Steps};
use super::gibbs::Mutation;
use crate::error::{QdagError, Result};
use crate::exec::sub_seed;
use crate::graph::{topological_order, Adjacency};
use crate::model::{EdgeKey, ModelData, SplineSettings};
use crate::prior::{sample_prior, EdgeParamBlock, PriorHyper};
use crate::quantile_loss::QuantileLevel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeConfig {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub rounds: usize,
    /// Sampler sweeps between response refreshes in the successive chain.
    pub inner_sweeps: usize,
    /// Successive rounds per replicate; `rounds` must be a multiple.
    pub replicate_len: usize,
    pub tau: f64,
    pub seed: u64,
    pub hyper: PriorHyper,
    pub splines: SplineSettings,
    pub mutation: Option<Mutation>,
}

impl Default for GewekeConfig {
    fn default() -> Self {
        Self {
            n: 20,
            p: 2,
            q: 1,
            rounds: 50_000,
            inner_sweeps: 3,
            replicate_len: 10,
            tau: 0.5,
            seed: 1,
            hyper: PriorHyper::default(),
            splines: SplineSettings { num_basis: 8, degree: 3, var_threshold: 0.995 },
            mutation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeStat {
    pub name: String,
    pub marginal_mean: f64,
    pub successive_mean: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GewekeReport {
    pub rounds: usize,
    pub stats: Vec<GewekeStat>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats.iter().map(|s| s.z.abs()).fold(0.0, f64::max)
    }

    pub fn test_functions(&self) -> Vec<&str> {
        self.stats.iter().map(|s| s.name.as_str()).collect()
    }
}

fn terms(p: usize) -> Vec<EdgeKey> {
    let mut out = Vec::new();
    for h in 0..p {
        out.push(EdgeKey::intercept(h));
        out.extend((0..p).filter(|&j| j != h).map(|j| EdgeKey::edge(h, j)));
    }
    out
}

fn union_of(data: &ModelData, keys: &[EdgeKey], params: &[EdgeParamBlock]) -> Result<Adjacency> {
    let mut u = Adjacency::empty(data.p());
    for (k, prm) in keys.iter().zip(params) {
        if let Some(j) = k.parent {
            if data.coefficient(*k, prm)?.iter().any(|b| *b != 0.0) {
                u.set(k.child, j, true)?;
            }
        }
    }
    Ok(u)
}

/// Prior draw of every term, repeated until the union graph is acyclic.
fn prior_draw(data: &ModelData, keys: &[EdgeKey], hyper: &PriorHyper, rng: &mut ChaCha8Rng) -> Result<Vec<EdgeParamBlock>> {
    let dims = data.reduced_dims();
    loop {
        let params: Vec<EdgeParamBlock> = keys
            .iter()
            .map(|k| {
                let mut b = sample_prior(hyper, &dims, rng);
                if k.is_intercept() {
                    b.threshold = 0.0;
                }
                b
            })
            .collect();
        if topological_order(&union_of(data, keys, &params)?).is_ok() {
            return Ok(params);
        }
    }
}

/// Asymmetric-Laplace noise with its `τ`-quantile at zero.
fn al_noise(tau: f64, rng: &mut ChaCha8Rng) -> f64 {
    let e1: f64 = Exp1.sample(rng);
    let e2: f64 = Exp1.sample(rng);
    e1 / tau - e2 / (1.0 - tau)
}

/// Responses from the working likelihood, generated parents first.
pub(crate) fn simulate_responses(
    data: &mut ModelData,
    keys: &[EdgeKey],
    params: &[EdgeParamBlock],
    tau: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let union = union_of(data, keys, params)?;
    let order = topological_order(&union)?;
    let coefs: Vec<Vec<f64>> = keys.iter().zip(params).map(|(k, p)| data.coefficient(*k, p)).collect::<Result<_>>()?;
    let n = data.n();
    for &h in order.as_slice().iter().rev() {
        for i in 0..n {
            let mut v = al_noise(tau, rng);
            for (k, c) in keys.iter().zip(&coefs).filter(|(k, _)| k.child == h) {
                v += match k.parent {
                    None => c[i],
                    Some(j) => {
                        if c[i] == 0.0 {
                            0.0
                        } else {
                            c[i] * data.y[[i, j]]
                        }
                    }
                };
            }
            data.y[[i, h]] = v;
        }
    }
    Ok(())
}

fn squash(v: f64) -> f64 {
    v / (1.0 + v.abs())
}

type TestFn = (String, Box<dyn Fn(&ModelData, &[EdgeParamBlock]) -> f64>);

fn test_functions(keys: &[EdgeKey]) -> Vec<TestFn> {
    let idx = |k: EdgeKey| keys.iter().position(|x| *x == k).expect("known term");
    let mut f: Vec<TestFn> = Vec::new();
    let mut add = |name: String, g: Box<dyn Fn(&ModelData, &[EdgeParamBlock]) -> f64>| f.push((name, g));
    for (label, key) in [("b00", EdgeKey::intercept(0)), ("b01", EdgeKey::edge(0, 1))] {
        let e = idx(key);
        add(format!("{label}.atan_mu"), Box::new(move |_, p| p[e].mu.atan()));
        add(format!("{label}.log_T2_nl"), Box::new(move |_, p| squash(p[e].nonlinear.global2.ln())));
        add(format!("{label}.log_c_nl"), Box::new(move |_, p| squash(p[e].nonlinear.c.ln())));
        add(format!("{label}.log_L2_nl"), Box::new(move |_, p| squash(p[e].nonlinear.blocks[0].local2.ln())));
        add(format!("{label}.log_zeta_nl"), Box::new(move |_, p| squash(p[e].nonlinear.blocks[0].zeta.ln())));
        add(format!("{label}.atan_eta_nl"), Box::new(move |_, p| p[e].nonlinear.blocks[0].eta.atan()));
        add(format!("{label}.atan_xi_nl"), Box::new(move |_, p| p[e].nonlinear.blocks[0].xi[0].atan()));
        add(format!("{label}.m_nl_pos"), Box::new(move |_, p| (p[e].nonlinear.blocks[0].m[0] > 0) as u8 as f64));
        add(format!("{label}.atan_eta_lin"), Box::new(move |_, p| p[e].linear.blocks[0].eta.atan()));
        add(format!("{label}.log_T2_lin"), Box::new(move |_, p| squash(p[e].linear.global2.ln())));
        add(format!("{label}.log_L2_lin"), Box::new(move |_, p| squash(p[e].linear.blocks[0].local2.ln())));
    }
    let e01 = idx(EdgeKey::edge(0, 1));
    let e10 = idx(EdgeKey::edge(1, 0));
    let keys_owned = keys.to_vec();
    add("b01.threshold".into(), Box::new(move |_, p| p[e01].threshold));
    add("b10.atan_mu".into(), Box::new(move |_, p| p[e10].mu.atan()));
    add(
        "edge_0_from_1".into(),
        Box::new(move |d, p| union_of(d, &keys_owned, p).map(|u| u.has_edge(0, 1) as u8 as f64).unwrap_or(f64::NAN)),
    );
    add("atan_mean_y0".into(), Box::new(|d, _| d.y.column(0).mean().unwrap_or(0.0).atan()));
    add("atan_mean_y1".into(), Box::new(|d, _| d.y.column(1).mean().unwrap_or(0.0).atan()));
    add(
        "frac_y1_pos".into(),
        Box::new(|d, _| d.y.column(1).iter().filter(|v| **v > 0.0).count() as f64 / d.n() as f64),
    );
    f
}

fn mean_and_iid_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn mean_and_batch_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let size = xs.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| xs[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let v = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (batches as f64 - 1.0);
    (m, (v / batches as f64).sqrt())
}

pub fn geweke_joint_test(cfg: &GewekeConfig) -> Result<GewekeReport> {
    if cfg.p != 2 || cfg.q != 1 {
        return Err(QdagError::Config("the joint test is defined for two nodes and one covariate".into()));
    }
    if cfg.replicate_len == 0 || !cfg.rounds.is_multiple_of(cfg.replicate_len) || cfg.rounds / cfg.replicate_len < 2 {
        return Err(QdagError::Config(format!(
            "{} rounds do not split into replicates of {}",
            cfg.rounds, cfg.replicate_len
        )));
    }
    let tau = QuantileLevel::new(cfg.tau)?;
    cfg.hyper.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 0));
    let x = ndarray::Array2::from_shape_fn((cfg.n, cfg.q), |_| StandardNormal.sample(&mut rng));
    let mut data = ModelData::new(ndarray::Array2::zeros((cfg.n, cfg.p)), x, cfg.splines)?;
    let keys = terms(cfg.p);
    let fns = test_functions(&keys);

    let mut mc = vec![Vec::with_capacity(cfg.rounds); fns.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 1));
    for _ in 0..cfg.rounds {
        let params = prior_draw(&data, &keys, &cfg.hyper, &mut rng)?;
        simulate_responses(&mut data, &keys, &params, cfg.tau, &mut rng)?;
        for (slot, (_, g)) in mc.iter_mut().zip(&fns) {
            slot.push(g(&data, &params));
        }
    }

    let steps = Steps { eta: 0.1, xi: 0.1, mu: 0.5, t_base: 0.1, z_range: (0, 0) };
    let nodes: Vec<(usize, Vec<usize>)> = (0..cfg.p).map(|h| (h, (0..cfg.p).filter(|&j| j != h).collect())).collect();
    let mut sc = vec![Vec::with_capacity(cfg.rounds); fns.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 2));
    let mut params = Vec::new();
    for r in 0..cfg.rounds {
        if r % cfg.replicate_len == 0 {
            params = prior_draw(&data, &keys, &cfg.hyper, &mut rng)?;
            simulate_responses(&mut data, &keys, &params, cfg.tau, &mut rng)?;
        }
        {
            let mut it = params.iter().cloned();
            let mut chain = Chain::new(&data, tau, cfg.hyper, steps, true, &nodes, |_| it.next().expect("one block per term"));
            chain.mutation = cfg.mutation;
            for _ in 0..cfg.inner_sweeps {
                chain.sweep(&mut rng);
            }
            params = chain.params().map(|(_, p)| p.clone()).collect();
        }
        simulate_responses(&mut data, &keys, &params, cfg.tau, &mut rng)?;
        for (slot, (_, g)) in sc.iter_mut().zip(&fns) {
            slot.push(g(&data, &params));
        }
    }

    let stats = fns
        .iter()
        .zip(mc.iter().zip(&sc))
        .map(|((name, _), (a, b))| {
            let (ma, sa) = mean_and_iid_se(a);
            let (mb, sb) = mean_and_batch_se(b, cfg.rounds / cfg.replicate_len);
            let se = (sa * sa + sb * sb).sqrt();
            let z = if se > 0.0 { (ma - mb) / se } else if ma == mb { 0.0 } else { f64::INFINITY };
            GewekeStat { name: name.clone(), marginal_mean: ma, successive_mean: mb, z }
        })
        .collect();
    Ok(GewekeReport { rounds: cfg.rounds, stats })
}

