use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::priors::{PriorConfig, RangeBounds};
use crate::error::{Error, Result};
use crate::grf::{MaternSpec, Order, SpectralBasis, SpectralGrid};
use crate::lattice::{CountGrid, FieldRole, Lattice};
use crate::model::{ClassSpec, ClassificationField, Design, LscpModel, MeanStructure};

/// Binned observations with their lattice and covariate design.
#[derive(Debug, Clone)]
pub struct FitData {
    pub lattice: Lattice,
    pub counts: CountGrid,
    pub design: Design,
}

impl FitData {
    pub fn new(lattice: Lattice, counts: CountGrid, design: Option<Design>) -> Result<Self> {
        let n = lattice.len();
        if counts.len() != n {
            return Err(Error::Shape(format!("{} counts for {n} lattice cells", counts.len())));
        }
        let design = design.unwrap_or_else(|| Design::intercept_only(n));
        if design.n_cells != n {
            return Err(Error::Shape(format!("design has {} cells, lattice has {n}", design.n_cells)));
        }
        Ok(Self {
            lattice,
            counts,
            design,
        })
    }

    pub fn cell_area(&self) -> f64 {
        self.lattice.cell_area()
    }
}

/// What to fit: the model structure with starting values, priors, and the
/// parameters held fixed at their starting values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub model: LscpModel,
    #[serde(default)]
    pub priors: PriorConfig,
    /// Parameter names (as reported in the sample store) held fixed.
    #[serde(default)]
    pub fixed: Vec<String>,
    /// Estimate the level-set mean coefficients; otherwise `μ_0` is fixed.
    #[serde(default)]
    pub estimate_level_set_mean: bool,
}

impl FitSpec {
    pub fn new(model: LscpModel) -> Self {
        Self {
            model,
            priors: PriorConfig::default(),
            fixed: vec![],
            estimate_level_set_mean: false,
        }
    }
}

/// A latent field in whitened spectral coordinates with its current basis.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub grid: Arc<SpectralGrid>,
    pub basis: SpectralBasis,
    pub white: Vec<Complex64>,
    /// Field values at the window cells.
    pub values: Vec<f64>,
}

impl FieldState {
    pub fn zero(grid: Arc<SpectralGrid>, spec: MaternSpec, order: Order) -> Self {
        let basis = SpectralBasis::new(&grid, spec, order);
        let white = vec![Complex64::new(0.0, 0.0); grid.len()];
        let values = vec![0.0; grid.window_len()];
        Self {
            grid,
            basis,
            white,
            values,
        }
    }

    pub fn spec(&self) -> &MaternSpec {
        self.basis.spec()
    }
}

#[derive(Debug, Clone)]
pub enum ClassState {
    Field {
        field: FieldState,
        beta: Vec<f64>,
        mean: Vec<f64>,
        bounds: RangeBounds,
    },
    Regression {
        beta: Vec<f64>,
        mean: Vec<f64>,
    },
    Constant {
        value: f64,
    },
}

impl ClassState {
    /// Class log-intensity surface at cell `j`.
    #[inline]
    pub fn surface(&self, j: usize) -> f64 {
        match self {
            ClassState::Field { field, mean, .. } => field.values[j] + mean[j],
            ClassState::Regression { mean, .. } => mean[j],
            ClassState::Constant { value } => *value,
        }
    }

    pub fn surface_vec(&self, n: usize) -> Vec<f64> {
        (0..n).map(|j| self.surface(j)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct LevelSetState {
    pub field: FieldState,
    pub thresholds: Vec<f64>,
    pub nugget: f64,
    pub beta: Vec<f64>,
    pub mean: Vec<f64>,
    pub bounds: RangeBounds,
    pub mean_estimated: bool,
}

impl LevelSetState {
    #[inline]
    pub fn v(&self, j: usize) -> f64 {
        self.field.values[j] + self.mean[j]
    }
}

/// Full sampler state.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub level_set: Option<LevelSetState>,
    pub classes: Vec<ClassState>,
    pub gamma: ClassificationField,
}

/// A parameter block updated jointly by MALA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Block {
    LevelSet,
    Class(usize),
}

impl Block {
    pub fn label(&self) -> String {
        match self {
            Block::LevelSet => "level_set".into(),
            Block::Class(k) => format!("class{}", k + 1),
        }
    }
}

fn beta_names(prefix: &str, n: usize, design: &Design) -> Vec<String> {
    design.names[..n].iter().map(|c| format!("{prefix}_{c}")).collect()
}

fn check_beta(mean: &MeanStructure, design: &Design) -> Result<Vec<f64>> {
    let b = mean.coefficients();
    if b.len() > design.ncols() {
        return Err(Error::Shape(format!(
            "{} mean coefficients but the design has {} columns",
            b.len(),
            design.ncols()
        )));
    }
    if let MeanStructure::Linear(_) = mean {
        if b.len() != design.ncols() {
            return Err(Error::Shape(format!(
                "{} mean coefficients for {} design columns",
                b.len(),
                design.ncols()
            )));
        }
    }
    Ok(b)
}

/// Truncation orders for the level-set and class grids; `None` is full order.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOrders {
    pub level_set: Option<Order>,
    pub class: Option<Order>,
}

impl ChainState {
    /// Initial state: fields at zero, parameters at the model's values,
    /// classes set by thresholding the level-set mean.
    pub fn initial(spec: &FitSpec, data: &FitData, orders: FitOrders) -> Result<Self> {
        let model = &spec.model;
        model.validate()?;
        spec.priors.validate()?;
        let lattice = &data.lattice;
        let n = lattice.len();
        let k = model.n_classes();
        let design = &data.design;

        let level_set = if k > 1 {
            if model.nugget <= 0.0 {
                return Err(Error::Config("inference needs a positive nugget when K > 1".into()));
            }
            if model.nugget > spec.priors.nugget_upper {
                return Err(Error::Config(format!(
                    "initial nugget {} exceeds the prior bound {}",
                    model.nugget, spec.priors.nugget_upper
                )));
            }
            let grid = Arc::new(SpectralGrid::new(lattice, FieldRole::LevelSet));
            let order = orders.level_set.unwrap_or_else(|| grid.full_order());
            let bounds = spec.priors.range_bounds(lattice, FieldRole::LevelSet)?;
            let ls = &model.level_set;
            if !bounds.contains(ls.range) {
                return Err(Error::Config(format!(
                    "initial level-set range {} outside prior support [{}, {}]",
                    ls.range, bounds.lo, bounds.hi
                )));
            }
            let beta = check_beta(&ls.mean, design)?;
            let mean = design.mul(&beta);
            Some(LevelSetState {
                field: FieldState::zero(grid, ls.matern(), order),
                thresholds: model.thresholds.interior().to_vec(),
                nugget: model.nugget,
                beta,
                mean,
                bounds,
                mean_estimated: spec.estimate_level_set_mean,
            })
        } else {
            None
        };

        let class_grid = Arc::new(SpectralGrid::new(lattice, FieldRole::Class));
        let class_order = orders.class.unwrap_or_else(|| class_grid.full_order());
        let mut classes = Vec::with_capacity(k);
        for c in &model.classes {
            classes.push(match c {
                ClassSpec::Field { matern, mean } => {
                    let bounds = spec.priors.range_bounds(lattice, FieldRole::Class)?;
                    if !bounds.contains(matern.range) {
                        return Err(Error::Config(format!(
                            "initial class range {} outside prior support [{}, {}]",
                            matern.range, bounds.lo, bounds.hi
                        )));
                    }
                    let beta = check_beta(mean, design)?;
                    ClassState::Field {
                        field: FieldState::zero(class_grid.clone(), *matern, class_order),
                        mean: design.mul(&beta),
                        beta,
                        bounds,
                    }
                }
                ClassSpec::Regression { mean } => {
                    let beta = check_beta(mean, design)?;
                    ClassState::Regression {
                        mean: design.mul(&beta),
                        beta,
                    }
                }
                ClassSpec::Constant { value } => ClassState::Constant { value: *value },
            });
        }
        let gamma = match &level_set {
            Some(ls) => ClassificationField {
                gamma: (0..n).map(|j| model.thresholds.classify(ls.v(j)) as u8).collect(),
            },
            None => ClassificationField::uniform(n, 0),
        };
        let state = Self {
            level_set,
            classes,
            gamma,
        };
        for name in &spec.fixed {
            if !state.param_names(design).contains(name) {
                return Err(Error::Config(format!("unknown fixed parameter '{name}'")));
            }
        }
        Ok(state)
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Blocks carrying at least one parameter or latent field.
    pub fn blocks(&self) -> Vec<Block> {
        let mut b = Vec::new();
        if self.level_set.is_some() {
            b.push(Block::LevelSet);
        }
        for (k, c) in self.classes.iter().enumerate() {
            if !matches!(c, ClassState::Constant { .. }) {
                b.push(Block::Class(k));
            }
        }
        b
    }

    /// Names of a block's parameters in vector order.
    pub fn block_names(&self, block: Block, design: &Design) -> Vec<String> {
        match block {
            Block::LevelSet => {
                let ls = self.level_set.as_ref().expect("level-set block without level set");
                level_set_names(ls, design)
            }
            Block::Class(k) => class_names(&self.classes[k], k, design),
        }
    }

    /// All parameter names, level set first.
    pub fn param_names(&self, design: &Design) -> Vec<String> {
        self.blocks()
            .into_iter()
            .flat_map(|b| self.block_names(b, design))
            .collect()
    }

    /// All parameters on their natural scale, in [`ChainState::param_names`] order.
    pub fn param_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        if let Some(ls) = &self.level_set {
            out.extend(level_set_natural(ls));
        }
        for c in &self.classes {
            out.extend(class_natural(c));
        }
        out
    }

    /// Log-intensity `log λ̃_j` under the current classification.
    pub fn log_intensity(&self) -> Vec<f64> {
        self.gamma
            .gamma
            .iter()
            .enumerate()
            .map(|(j, &g)| self.classes[g as usize].surface(j))
            .collect()
    }
}

pub(crate) fn level_set_names(ls: &LevelSetState, design: &Design) -> Vec<String> {
    let mut v: Vec<String> = (1..=ls.thresholds.len()).map(|i| format!("c{i}")).collect();
    v.push("nugget".into());
    v.push("rho0".into());
    if ls.mean_estimated {
        v.extend(beta_names("beta0", ls.beta.len(), design));
    }
    v
}

pub(crate) fn class_names(c: &ClassState, k: usize, design: &Design) -> Vec<String> {
    let i = k + 1;
    match c {
        ClassState::Field { beta, .. } => {
            let mut v = vec![format!("sigma{i}"), format!("rho{i}")];
            v.extend(beta_names(&format!("beta{i}"), beta.len(), design));
            v
        }
        ClassState::Regression { beta, .. } => beta_names(&format!("beta{i}"), beta.len(), design),
        ClassState::Constant { .. } => vec![],
    }
}

/// Unconstrained block vector: thresholds and coefficients as is, scales
/// and ranges on the log scale.
pub(crate) fn level_set_unconstrained(ls: &LevelSetState) -> Vec<f64> {
    let mut u = ls.thresholds.clone();
    u.push(ls.nugget.ln());
    u.push(ls.field.spec().range.ln());
    if ls.mean_estimated {
        u.extend(&ls.beta);
    }
    u
}

pub(crate) fn level_set_natural(ls: &LevelSetState) -> Vec<f64> {
    let mut u = ls.thresholds.clone();
    u.push(ls.nugget);
    u.push(ls.field.spec().range);
    if ls.mean_estimated {
        u.extend(&ls.beta);
    }
    u
}

pub(crate) fn class_unconstrained(c: &ClassState) -> Vec<f64> {
    match c {
        ClassState::Field { field, beta, .. } => {
            let mut u = vec![field.spec().sigma.ln(), field.spec().range.ln()];
            u.extend(beta);
            u
        }
        ClassState::Regression { beta, .. } => beta.clone(),
        ClassState::Constant { .. } => vec![],
    }
}

pub(crate) fn class_natural(c: &ClassState) -> Vec<f64> {
    match c {
        ClassState::Field { field, beta, .. } => {
            let mut u = vec![field.spec().sigma, field.spec().range];
            u.extend(beta);
            u
        }
        ClassState::Regression { beta, .. } => beta.clone(),
        ClassState::Constant { .. } => vec![],
    }
}
