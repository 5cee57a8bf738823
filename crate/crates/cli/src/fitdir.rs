//! Loading response/covariate tables and fit output directories.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use qdagx::model::{standardize_columns, ModelData, SplineSettings};
use qdagx::sampler::archive::read_archive;
use qdagx::sampler::{Mode, PosteriorDraws};
use qdagx::simdata::SimTruth;

use crate::manifest::sha256_file;
use crate::table::{read_table, Table};
use crate::RunContext;

pub const FIT_INFO_FILE: &str = "fit.json";
pub const TRUTH_FILE: &str = "truth.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZScore {
    /// Off when the covariates come from a simulated bundle, on otherwise.
    Auto,
    On,
    Off,
}

/// What a fit ran on, stored next to its archives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub mode: Mode,
    pub y: PathBuf,
    pub y_sha256: String,
    pub x: Option<PathBuf>,
    pub x_sha256: Option<String>,
    pub zscore: bool,
    pub splines: SplineSettings,
    pub ids: Vec<String>,
    pub node_names: Vec<String>,
    pub covariate_names: Vec<String>,
    pub taus: Vec<f64>,
    /// Children first, by node name.
    pub ordering: Option<Vec<String>>,
    pub kendall_tau: Option<f64>,
}

pub fn tau_dir_name(tau: f64) -> String {
    format!("tau_{tau}")
}

pub struct LoadedData {
    pub y: Table,
    pub x_names: Vec<String>,
    pub data: ModelData,
}

pub fn resolve_zscore(mode: ZScore, x: Option<&Path>) -> bool {
    match mode {
        ZScore::On => true,
        ZScore::Off => false,
        ZScore::Auto => {
            x.is_some_and(|p| !p.parent().unwrap_or(Path::new(".")).join(TRUTH_FILE).exists())
        }
    }
}

pub fn load_data(y_path: &Path, x_path: Option<&Path>, zscore: bool, splines: SplineSettings) -> Result<LoadedData> {
    let y = read_table(y_path)?;
    let (x_names, x) = match x_path {
        Some(p) => {
            let x = read_table(p)?;
            if x.ids != y.ids {
                bail!("row ids of {} and {} differ", y_path.display(), p.display());
            }
            (x.names, x.values)
        }
        None => (Vec::new(), Array2::zeros((y.ids.len(), 0))),
    };
    let x = if zscore && x.ncols() > 0 { standardize_columns(x.view())? } else { x };
    let data = ModelData::new(y.values.clone(), x, splines)?;
    Ok(LoadedData { y, x_names, data })
}

pub struct FitDir {
    pub dir: PathBuf,
    pub info: FitInfo,
    pub data: ModelData,
    pub y: Table,
}

impl FitDir {
    /// Opens a fit directory and reloads its inputs, which must be unchanged.
    pub fn open(dir: &Path, ctx: &mut RunContext) -> Result<Self> {
        let path = dir.join(FIT_INFO_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("{} is not a fit directory", dir.display()))?;
        let info: FitInfo = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        ctx.input(dir)?;
        if sha256_file(&info.y)? != info.y_sha256 {
            bail!("{} changed since the fit", info.y.display());
        }
        if let (Some(x), Some(h)) = (&info.x, &info.x_sha256) {
            if &sha256_file(x)? != h {
                bail!("{} changed since the fit", x.display());
            }
        }
        let loaded = load_data(&info.y, info.x.as_deref(), info.zscore, info.splines)?;
        Ok(Self { dir: dir.to_path_buf(), info, data: loaded.data, y: loaded.y })
    }

    pub fn draws(&self, tau: f64) -> Result<PosteriorDraws> {
        let draws = read_archive(&self.dir.join(tau_dir_name(tau)))?;
        if draws.p != self.data.p() {
            bail!("archive at level {tau} has {} nodes, data have {}", draws.p, self.data.p());
        }
        Ok(draws)
    }
}

/// Truth of a simulated bundle, checked against the fitted responses.
pub fn load_truth(bundle: &Path, fit: &FitDir, ctx: &mut RunContext) -> Result<SimTruth> {
    let path = bundle.join(TRUTH_FILE);
    ctx.input(&path)?;
    let text = std::fs::read_to_string(&path).with_context(|| format!("{} has no {TRUTH_FILE}", bundle.display()))?;
    let truth: SimTruth = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let s = truth.settings;
    if (s.n, s.p, s.q) != (fit.data.n(), fit.data.p(), fit.data.q()) {
        bail!(
            "truth is for n={}, p={}, q={} but the fit has n={}, p={}, q={}",
            s.n,
            s.p,
            s.q,
            fit.data.n(),
            fit.data.p(),
            fit.data.q()
        );
    }
    let y_path = bundle.join("Y.csv");
    if y_path.exists() && read_table(&y_path)?.values != fit.y.values {
        bail!("{} does not hold the responses the fit used", y_path.display());
    }
    Ok(truth)
}
