//! On-disk draw archive.
//!
//! A directory holding
//!
//! * `manifest.json`: quantile level, sampler configuration, acceptance
//!   counts, term list, reduced basis dimensions and the draw count;
//! * `params.bin`: packed little-endian `f64` records, one per draw, each
//!   the concatenation of the term records in manifest order;
//! * `loglik.bin`: `n_draws × p` little-endian `f64` cached node
//!   log-likelihoods;
//! * `unions.json`: the union graph of every draw as a `(child, parent)` list.
//!
//! A term record is `mu, t`, then for the nonlinear and then the linear group
//! `T², c` followed by, per covariate block, `η, L², ζ, ξ_1..ξ_d, m_1..m_d`.
//! Signs `m` are stored as `±1.0`.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AcceptCounts, PosteriorDraws, QuantileDagDraw, SamplerConfig};
use crate::error::{QdagError, Result};
use crate::graph::Adjacency;
use crate::model::EdgeKey;
use crate::prior::{EdgeParamBlock, PxhsBlock, PxhsGroup};
use crate::quantile_loss::QuantileLevel;

pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub version: u32,
    pub tau: QuantileLevel,
    pub config: SamplerConfig,
    pub acceptance: AcceptCounts,
    pub p: usize,
    pub reduced_dims: Vec<usize>,
    pub terms: Vec<EdgeKey>,
    pub n_draws: usize,
    /// `f64` values per term record, aligned with `terms`.
    pub record_lengths: Vec<usize>,
}

/// Number of `f64` values in one term record.
pub fn record_length(reduced_dims: &[usize]) -> usize {
    let group = |dims: &mut dyn Iterator<Item = usize>| 2 + dims.map(|d| 3 + 2 * d).sum::<usize>();
    2 + group(&mut reduced_dims.iter().copied()) + group(&mut reduced_dims.iter().map(|_| 1))
}

fn push_group(out: &mut Vec<f64>, g: &PxhsGroup) {
    out.push(g.global2);
    out.push(g.c);
    for b in &g.blocks {
        out.extend([b.eta, b.local2, b.zeta]);
        out.extend_from_slice(&b.xi);
        out.extend(b.m.iter().map(|&m| m as f64));
    }
}

pub fn encode_params(p: &EdgeParamBlock, out: &mut Vec<f64>) {
    out.push(p.mu);
    out.push(p.threshold);
    push_group(out, &p.nonlinear);
    push_group(out, &p.linear);
}

fn take_group(vals: &mut std::slice::Iter<f64>, dims: &[usize]) -> Result<PxhsGroup> {
    let mut next = || vals.next().copied().ok_or_else(|| QdagError::Format("truncated parameter record".into()));
    let global2 = next()?;
    let c = next()?;
    let mut blocks = Vec::with_capacity(dims.len());
    for &d in dims {
        let (eta, local2, zeta) = (next()?, next()?, next()?);
        let xi = (0..d).map(|_| next()).collect::<Result<Vec<_>>>()?;
        let m = (0..d)
            .map(|_| match next()? {
                v if v == 1.0 => Ok(1i8),
                v if v == -1.0 => Ok(-1i8),
                v => Err(QdagError::Format(format!("sign entry {v} is not ±1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        blocks.push(PxhsBlock { eta, xi, m, local2, zeta });
    }
    Ok(PxhsGroup { global2, c, blocks })
}

pub fn decode_params(vals: &[f64], reduced_dims: &[usize]) -> Result<EdgeParamBlock> {
    if vals.len() != record_length(reduced_dims) {
        return Err(QdagError::Format(format!(
            "record of {} values, expected {}",
            vals.len(),
            record_length(reduced_dims)
        )));
    }
    let mut it = vals.iter();
    let mu = *it.next().expect("length checked");
    let threshold = *it.next().expect("length checked");
    let nonlinear = take_group(&mut it, reduced_dims)?;
    let linear = take_group(&mut it, &vec![1; reduced_dims.len()])?;
    Ok(EdgeParamBlock { mu, nonlinear, linear, threshold })
}

fn write_f64s(path: &Path, vals: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(QdagError::Format(format!("{} is not a whole number of f64 values", path.display())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

pub fn write_archive(dir: &Path, draws: &PosteriorDraws) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = ArchiveManifest {
        version: ARCHIVE_VERSION,
        tau: draws.tau,
        config: draws.config.clone(),
        acceptance: draws.acceptance,
        p: draws.p,
        reduced_dims: draws.reduced_dims.clone(),
        terms: draws.terms.clone(),
        n_draws: draws.draws.len(),
        record_lengths: draws
            .draws
            .first()
            .map(|d| d.params.iter().map(|p| record_length(&p.reduced_dims())).collect())
            .unwrap_or_default(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;

    let mut params = Vec::new();
    let mut loglik = Vec::with_capacity(draws.draws.len() * draws.p);
    let mut unions = Vec::with_capacity(draws.draws.len());
    for d in &draws.draws {
        d.params.iter().for_each(|p| encode_params(p, &mut params));
        loglik.extend_from_slice(&d.node_loglik);
        unions.push(d.union.edges().collect::<Vec<_>>());
    }
    write_f64s(&dir.join("params.bin"), &params)?;
    write_f64s(&dir.join("loglik.bin"), &loglik)?;
    fs::write(dir.join("unions.json"), serde_json::to_vec(&unions)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<ArchiveManifest> {
    let m: ArchiveManifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if m.version != ARCHIVE_VERSION {
        return Err(QdagError::Format(format!("archive version {} is not supported", m.version)));
    }
    Ok(m)
}

pub fn read_archive(dir: &Path) -> Result<PosteriorDraws> {
    let m = read_manifest(dir)?;
    let params = read_f64s(&dir.join("params.bin"))?;
    let loglik = read_f64s(&dir.join("loglik.bin"))?;
    let unions: Vec<Vec<(usize, usize)>> = serde_json::from_slice(&fs::read(dir.join("unions.json"))?)?;
    let lens: Vec<usize> = m
        .terms
        .iter()
        .map(|_| record_length(&m.reduced_dims))
        .collect();
    if m.n_draws > 0 && lens != m.record_lengths {
        return Err(QdagError::Format("record lengths disagree with the basis dimensions".into()));
    }
    let per_draw: usize = lens.iter().sum();
    if params.len() != per_draw * m.n_draws || loglik.len() != m.p * m.n_draws || unions.len() != m.n_draws {
        return Err(QdagError::Format("archive files disagree with the manifest".into()));
    }
    let mut draws = Vec::with_capacity(m.n_draws);
    for d in 0..m.n_draws {
        let mut offset = d * per_draw;
        let mut blocks = Vec::with_capacity(m.terms.len());
        for len in &lens {
            blocks.push(decode_params(&params[offset..offset + len], &m.reduced_dims)?);
            offset += len;
        }
        draws.push(QuantileDagDraw {
            params: blocks,
            union: Adjacency::from_edges(m.p, &unions[d])?,
            node_loglik: loglik[d * m.p..(d + 1) * m.p].to_vec(),
        });
    }
    Ok(PosteriorDraws {
        tau: m.tau,
        config: m.config,
        terms: m.terms,
        draws,
        acceptance: m.acceptance,
        p: m.p,
        reduced_dims: m.reduced_dims,
    })
}
