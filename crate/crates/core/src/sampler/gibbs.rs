//! Closed-form conditional draws for the horseshoe scales and the sign
//! indicators. All inverse-gamma parameters are shape and rate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::prior::{inv_gamma, PxhsGroup};

/// Corruptions of individual conditional draws, used by the
/// sampler-correctness harness to confirm that it detects a broken update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    T2Rate,
    CRate,
    L2Rate,
    ZetaRate,
}

impl Mutation {
    pub const ALL: [Mutation; 4] = [Mutation::T2Rate, Mutation::CRate, Mutation::L2Rate, Mutation::ZetaRate];
    const FACTOR: f64 = 3.0;

    pub(crate) fn rate_scale(active: Option<Mutation>, which: Mutation) -> f64 {
        if active == Some(which) {
            Self::FACTOR
        } else {
            1.0
        }
    }
}

/// `T² ~ IG((1+q)/2, 1/c + ½ Σ_k (η_k/L_k)²)`.
pub fn gibbs_t2<R: Rng + ?Sized>(group: &PxhsGroup, rng: &mut R) -> f64 {
    gibbs_t2_scaled(group, 1.0, rng)
}

pub(crate) fn gibbs_t2_scaled<R: Rng + ?Sized>(group: &PxhsGroup, scale: f64, rng: &mut R) -> f64 {
    let q = group.blocks.len() as f64;
    let ss: f64 = group.blocks.iter().map(|b| b.eta * b.eta / b.local2).sum();
    inv_gamma(0.5 * (1.0 + q), scale * (1.0 / group.c + 0.5 * ss), rng)
}

/// `c ~ IG(1, 1 + 1/T²)`.
pub fn gibbs_c<R: Rng + ?Sized>(global2: f64, rng: &mut R) -> f64 {
    gibbs_c_scaled(global2, 1.0, rng)
}

pub(crate) fn gibbs_c_scaled<R: Rng + ?Sized>(global2: f64, scale: f64, rng: &mut R) -> f64 {
    inv_gamma(1.0, scale * (1.0 + 1.0 / global2), rng)
}

/// `L² ~ IG(1, 1/ζ + ½ (η/T)²)`.
pub fn gibbs_l2<R: Rng + ?Sized>(eta: f64, global2: f64, zeta: f64, rng: &mut R) -> f64 {
    gibbs_l2_scaled(eta, global2, zeta, 1.0, rng)
}

pub(crate) fn gibbs_l2_scaled<R: Rng + ?Sized>(eta: f64, global2: f64, zeta: f64, scale: f64, rng: &mut R) -> f64 {
    inv_gamma(1.0, scale * (1.0 / zeta + 0.5 * eta * eta / global2), rng)
}

/// `ζ ~ IG(1, 1 + 1/L²)`.
pub fn gibbs_zeta<R: Rng + ?Sized>(local2: f64, rng: &mut R) -> f64 {
    gibbs_zeta_scaled(local2, 1.0, rng)
}

pub(crate) fn gibbs_zeta_scaled<R: Rng + ?Sized>(local2: f64, scale: f64, rng: &mut R) -> f64 {
    inv_gamma(1.0, scale * (1.0 + 1.0 / local2), rng)
}

/// `P(m = +1 | ξ)` when `ξ ~ N(m, σ_m²)` and `m` is a fair sign.
pub fn prob_m_positive(xi: f64, sigma_m: f64) -> f64 {
    let s = 2.0 * xi / (sigma_m * sigma_m);
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

pub fn gibbs_m<R: Rng + ?Sized>(xi: f64, sigma_m: f64, rng: &mut R) -> i8 {
    if rng.random::<f64>() < prob_m_positive(xi, sigma_m) {
        1
    } else {
        -1
    }
}

/// New exponent for the threshold step `0.1·2^z` after a window of
/// threshold proposals with the given acceptance rate.
pub fn adapt_threshold_step(window_rate: f64, z: i32, range: (i32, i32)) -> i32 {
    let next = if window_rate < 0.2 {
        z - 1
    } else if window_rate > 0.4 {
        z + 1
    } else {
        z
    };
    next.clamp(range.0, range.1)
}
