//! Empirical checks that posteriors settle as the lattice is refined and the
//! spectral truncation grows.
//!
//! Total variation between posteriors is not estimable from samples; the
//! study tracks posterior means of a fixed set of probe functionals instead
//! and asks whether their successive differences shrink.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointPattern;
use crate::grf::SpectralGrid;
use crate::inference::{run_chain, ChainConfig, FitData, FitSpec};
use crate::lattice::{bin_points, FieldRole, Lattice, Margins};
use crate::stats::Welford;

/// Statement attached to every report.
pub const PROXY_NOTE: &str =
    "total variation between posteriors is not estimable; differences in posterior means of probe functionals are used as a proxy";

/// Spectral truncation relative to the lattice's extended grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderLevel {
    Half,
    Full,
}

impl OrderLevel {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Half => "half",
            Self::Full => "full",
        }
    }
}

impl std::str::FromStr for OrderLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(Self::Half),
            "full" => Ok(Self::Full),
            other => Err(Error::Usage(format!("unknown truncation order '{other}'; expected half or full"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Lattice sizes `(nx, ny)`, each dividing the next.
    pub sizes: Vec<(usize, usize)>,
    pub orders: Vec<OrderLevel>,
    pub margins: Margins,
    pub chain: ChainConfig,
    /// Points whose log-intensity is tracked.
    pub probes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineRow {
    pub nx: usize,
    pub ny: usize,
    pub order: OrderLevel,
    pub functional: String,
    pub mean: f64,
    pub sd: f64,
    /// `mean` minus the mean at the next coarser lattice, same order.
    pub delta: Option<f64>,
}

impl RefineRow {
    pub fn level(&self) -> String {
        format!("{}x{}/{}", self.nx, self.ny, self.order.label())
    }
}

/// Whether successive absolute differences of one functional shrink along
/// the lattice sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrend {
    pub functional: String,
    pub order: OrderLevel,
    pub abs_deltas: Vec<f64>,
    pub shrinking: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineReport {
    pub rows: Vec<RefineRow>,
    pub trends: Vec<ProbeTrend>,
    /// Fraction of trends that shrink; `None` with fewer than 3 sizes.
    pub fraction_shrinking: Option<f64>,
    pub note: String,
}

impl RefineReport {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let io = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["level", "functional", "mean", "sd", "delta"]).map_err(io)?;
        for r in &self.rows {
            let d = r.delta.map(|d| d.to_string()).unwrap_or_default();
            w.write_record([r.level(), r.functional.clone(), r.mean.to_string(), r.sd.to_string(), d])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io { path: path.into(), source: e })
    }
}

fn check_nested(sizes: &[(usize, usize)]) -> Result<()> {
    if sizes.is_empty() || sizes.iter().any(|&(a, b)| a == 0 || b == 0) {
        return Err(Error::Usage("refinement needs at least one nonempty lattice size".into()));
    }
    for w in sizes.windows(2) {
        let ((a, b), (c, d)) = (w[0], w[1]);
        if c <= a || d <= b || c % a != 0 || d % b != 0 {
            return Err(Error::Usage(format!(
                "lattice sizes must be nested: {a}x{b} does not divide {c}x{d}"
            )));
        }
    }
    Ok(())
}

/// Posterior means and sds of the probe functionals for one fit.
fn fit_level(
    spec: &FitSpec,
    pattern: &PointPattern,
    size: (usize, usize),
    order: OrderLevel,
    cfg: &RefineConfig,
) -> Result<Vec<(String, f64, f64)>> {
    let lattice = Lattice::new(pattern.window, size.0, size.1, cfg.margins)?;
    let counts = bin_points(pattern, &lattice);
    let data = FitData::new(lattice.clone(), counts, None)?;
    let mut chain = cfg.chain.clone();
    if order == OrderLevel::Half {
        chain.level_set_order = Some(SpectralGrid::new(&lattice, FieldRole::LevelSet).half_order());
        chain.class_order = Some(SpectralGrid::new(&lattice, FieldRole::Class).half_order());
    }
    let out = run_chain(spec, &data, &chain)?;
    let store = &out.store;
    let mut res = Vec::new();
    let mut push = |name: String, xs: &mut dyn Iterator<Item = f64>| {
        let mut w = Welford::default();
        xs.for_each(|x| w.push(x));
        res.push((name, w.mean(), w.variance().sqrt()));
    };
    for (i, &(x, y)) in cfg.probes.iter().enumerate() {
        let j = lattice
            .locate(x, y)
            .ok_or_else(|| Error::Usage(format!("probe point ({x}, {y}) lies outside the window")))?;
        push(format!("log_intensity_p{}", i + 1), &mut store.log_intensity.iter().map(|s| s[j] as f64));
    }
    for name in ["sigma1", "rho1"] {
        if let Some(t) = store.trace(name) {
            push(name.to_string(), &mut t.into_iter());
        }
    }
    let n = lattice.len() as f64;
    push(
        "class1_fraction".to_string(),
        &mut store.gamma.iter().map(|g| g.iter().filter(|&&k| k == 0).count() as f64 / n),
    );
    Ok(res)
}

/// Fit the same point pattern at every lattice size and truncation order
/// with matched seeds and report the probe functionals.
pub fn refine_study(spec: &FitSpec, pattern: &PointPattern, cfg: &RefineConfig) -> Result<RefineReport> {
    check_nested(&cfg.sizes)?;
    if cfg.orders.is_empty() {
        return Err(Error::Usage("refinement needs at least one truncation order".into()));
    }
    let levels: Vec<((usize, usize), OrderLevel)> = cfg
        .orders
        .iter()
        .flat_map(|&o| cfg.sizes.iter().map(move |&s| (s, o)))
        .collect();
    let fits: Vec<Vec<(String, f64, f64)>> = levels
        .par_iter()
        .map(|&(s, o)| fit_level(spec, pattern, s, o, cfg))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut trends = Vec::new();
    let ns = cfg.sizes.len();
    for (oi, &order) in cfg.orders.iter().enumerate() {
        let block = &fits[oi * ns..(oi + 1) * ns];
        for (fi, (name, _, _)) in block[0].iter().enumerate() {
            let mut abs = Vec::new();
            for (si, fit) in block.iter().enumerate() {
                let (_, mean, sd) = &fit[fi];
                let delta = (si > 0).then(|| mean - block[si - 1][fi].1);
                if let Some(d) = delta {
                    abs.push(d.abs());
                }
                rows.push(RefineRow {
                    nx: cfg.sizes[si].0,
                    ny: cfg.sizes[si].1,
                    order,
                    functional: name.clone(),
                    mean: *mean,
                    sd: *sd,
                    delta,
                });
            }
            let shrinking = abs.len() >= 2 && abs.windows(2).all(|w| w[1] < w[0]);
            trends.push(ProbeTrend { functional: name.clone(), order, abs_deltas: abs, shrinking });
        }
    }
    let fraction_shrinking = (ns >= 3 && !trends.is_empty())
        .then(|| trends.iter().filter(|t| t.shrinking).count() as f64 / trends.len() as f64);
    Ok(RefineReport { rows, trends, fraction_shrinking, note: PROXY_NOTE.to_string() })
}
