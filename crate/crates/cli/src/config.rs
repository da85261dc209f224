//! Run configuration files (TOML) and their resolved forms.
//!
//! Relative paths inside a config file are resolved against the file's
//! directory, so a resolved config is independent of the working directory.

use std::path::{Path, PathBuf};

use lscp::convergence::OrderLevel;
use lscp::geometry::Window;
use lscp::inference::{ChainConfig, PriorConfig};
use lscp::lattice::{Lattice, Margins};
use lscp::model::LscpModel;
use lscp::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub nx: usize,
    pub ny: usize,
    pub margins: Margins,
}

impl LatticeConfig {
    pub fn build(&self, window: Window) -> Result<Lattice> {
        Lattice::new(window, self.nx, self.ny, self.margins)
    }
}

/// A model on a lattice, as used by `simulate` and `moments`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub window: Window,
    pub lattice: LatticeConfig,
    pub model: LscpModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Point pattern CSV with header `x,y`.
    pub pattern: PathBuf,
    /// Covariates per lattice cell (output of `preprocess`).
    #[serde(default)]
    pub covariates: Option<PathBuf>,
    /// Replace constant-class values by the mean intensity over cells with
    /// at most one point.
    #[serde(default = "yes")]
    pub constant_from_data: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub window: Window,
    pub lattice: LatticeConfig,
    pub data: DataConfig,
    pub model: LscpModel,
    #[serde(default)]
    pub priors: PriorConfig,
    #[serde(default)]
    pub fixed: Vec<String>,
    #[serde(default)]
    pub estimate_level_set_mean: bool,
    #[serde(default)]
    pub chain: ChainConfig,
}

/// A raster input; plain matrix files need `cell`, `x0` and `y0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterInput {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub cell: Option<f64>,
    #[serde(default)]
    pub x0: Option<f64>,
    #[serde(default)]
    pub y0: Option<f64>,
}

impl RasterInput {
    pub fn load(&self) -> Result<lscp::data::Raster> {
        match (self.cell, self.x0, self.y0) {
            (Some(c), Some(x), Some(y)) => lscp::data::load_raster_matrix(&self.path, c, x, y),
            (None, None, None) => lscp::data::load_raster(&self.path),
            _ => Err(Error::Config(format!(
                "raster '{}': give all of cell, x0, y0 for a plain matrix file, or none for a headed file",
                self.name
            ))),
        }
    }
}

fn default_vif() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub window: Window,
    pub lattice: LatticeConfig,
    /// Elevation raster; yields the covariates `Elev` and `Slope`.
    #[serde(default)]
    pub elevation: Option<RasterInput>,
    #[serde(default)]
    pub rasters: Vec<RasterInput>,
    #[serde(default = "default_vif")]
    pub vif_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineFileConfig {
    pub window: Window,
    /// Model generating the synthetic data.
    pub truth: LscpModel,
    /// Structure and starting values of the fitted model; defaults to the
    /// truth.
    #[serde(default)]
    pub start: Option<LscpModel>,
    pub sizes: Vec<(usize, usize)>,
    #[serde(default = "both_orders")]
    pub orders: Vec<OrderLevel>,
    pub margins: Margins,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub priors: PriorConfig,
    pub probes: Vec<(f64, f64)>,
    #[serde(default)]
    pub data_seed: u64,
}

fn both_orders() -> Vec<OrderLevel> {
    vec![OrderLevel::Half, OrderLevel::Full]
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// `p` relative to the directory of `base`, made absolute.
pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    let joined = if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new(".")).join(p)
    };
    std::path::absolute(&joined).unwrap_or(joined)
}

impl FitConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut c: Self = read_toml(path)?;
        c.data.pattern = resolve(path, &c.data.pattern);
        c.data.covariates = c.data.covariates.map(|p| resolve(path, &p));
        Ok(c)
    }
}

impl PreprocessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut c: Self = read_toml(path)?;
        if let Some(e) = c.elevation.as_mut() {
            e.path = resolve(path, &e.path);
        }
        for r in &mut c.rasters {
            r.path = resolve(path, &r.path);
        }
        Ok(c)
    }
}
