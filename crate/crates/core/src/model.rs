//! The level-set Cox process specification: class mean structures, ordered
//! thresholds, the nugget, classification probabilities and assembly of the
//! discretised log-intensity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grf::MaternSpec;
use crate::special::{log_norm_interval, norm_cdf};

/// Covariate design over lattice cells. Column 0 is the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub names: Vec<String>,
    pub n_cells: usize,
    /// Column-major values, one `Vec` per column.
    pub columns: Vec<Vec<f64>>,
}

impl Design {
    pub fn intercept_only(n_cells: usize) -> Self {
        Self {
            names: vec!["Intercept".into()],
            n_cells,
            columns: vec![vec![1.0; n_cells]],
        }
    }

    /// Intercept followed by the given covariate columns.
    pub fn with_covariates(names: Vec<String>, covariates: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != covariates.len() {
            return Err(Error::Shape(format!(
                "{} covariate names for {} columns",
                names.len(),
                covariates.len()
            )));
        }
        let n = covariates.first().map_or(0, |c| c.len());
        if covariates.iter().any(|c| c.len() != n) || n == 0 {
            return Err(Error::Shape("covariate columns must share a nonzero length".into()));
        }
        let mut all_names = vec!["Intercept".to_string()];
        all_names.extend(names);
        let mut columns = vec![vec![1.0; n]];
        columns.extend(covariates);
        Ok(Self {
            names: all_names,
            n_cells: n,
            columns,
        })
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    /// `B β` for the first `beta.len()` columns.
    pub fn mul(&self, beta: &[f64]) -> Vec<f64> {
        assert!(beta.len() <= self.ncols(), "more coefficients than design columns");
        let mut out = vec![0.0; self.n_cells];
        for (col, b) in self.columns.iter().zip(beta) {
            for (o, x) in out.iter_mut().zip(col) {
                *o += b * x;
            }
        }
        out
    }

    /// `Bᵀ g` restricted to the first `p` columns.
    pub fn tmul(&self, g: &[f64], p: usize) -> Vec<f64> {
        self.columns[..p]
            .iter()
            .map(|col| col.iter().zip(g).map(|(x, y)| x * y).sum())
            .collect()
    }
}

/// Deterministic mean of a field: a constant, or linear in the design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanStructure {
    Constant(f64),
    /// Coefficients on the design columns, intercept first.
    Linear(Vec<f64>),
}

impl MeanStructure {
    /// Coefficient vector; a constant mean is an intercept-only model.
    pub fn coefficients(&self) -> Vec<f64> {
        match self {
            MeanStructure::Constant(m) => vec![*m],
            MeanStructure::Linear(b) => b.clone(),
        }
    }

    pub fn with_coefficients(&self, beta: &[f64]) -> Self {
        match self {
            MeanStructure::Constant(_) => MeanStructure::Constant(beta[0]),
            MeanStructure::Linear(_) => MeanStructure::Linear(beta.to_vec()),
        }
    }

    pub fn values(&self, n_cells: usize, design: Option<&Design>) -> Result<Vec<f64>> {
        match self {
            MeanStructure::Constant(m) => Ok(vec![*m; n_cells]),
            MeanStructure::Linear(b) => {
                let d = design.ok_or_else(|| {
                    Error::Config("linear mean structure needs a covariate design".into())
                })?;
                if d.n_cells != n_cells {
                    return Err(Error::Shape(format!(
                        "design has {} cells, lattice has {n_cells}",
                        d.n_cells
                    )));
                }
                if b.len() != d.ncols() {
                    return Err(Error::Shape(format!(
                        "{} coefficients for {} design columns",
                        b.len(),
                        d.ncols()
                    )));
                }
                Ok(d.mul(b))
            }
        }
    }

    /// Value at a single location with covariate row `row` (intercept first).
    pub fn value_at(&self, row: Option<&[f64]>) -> f64 {
        match self {
            MeanStructure::Constant(m) => *m,
            MeanStructure::Linear(b) => {
                let r = row.expect("covariate row required for a linear mean");
                b.iter().zip(r).map(|(x, y)| x * y).sum()
            }
        }
    }
}

/// How a class contributes to the log-intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassSpec {
    /// `X_k + μ_k` with a Matérn field `X_k`.
    Field { matern: MaternSpec, mean: MeanStructure },
    /// `μ_k` alone.
    Regression { mean: MeanStructure },
    /// Fixed log-intensity `C_k`.
    Constant { value: f64 },
}

impl ClassSpec {
    pub fn field(sigma: f64, range: f64, nu: f64, mean: f64) -> Self {
        ClassSpec::Field {
            matern: MaternSpec { sigma, range, nu },
            mean: MeanStructure::Constant(mean),
        }
    }

    pub fn constant(value: f64) -> Self {
        ClassSpec::Constant { value }
    }

    pub fn matern(&self) -> Option<&MaternSpec> {
        match self {
            ClassSpec::Field { matern, .. } => Some(matern),
            _ => None,
        }
    }

    pub fn mean(&self) -> Option<&MeanStructure> {
        match self {
            ClassSpec::Field { mean, .. } | ClassSpec::Regression { mean } => Some(mean),
            ClassSpec::Constant { .. } => None,
        }
    }

    /// Marginal variance `r_k(0)` of the random part.
    pub fn variance(&self) -> f64 {
        self.matern().map_or(0.0, |m| m.variance())
    }

    /// Covariance `r_k(h)` of the random part.
    pub fn covariance(&self, h: f64) -> f64 {
        self.matern().map_or(0.0, |m| crate::grf::matern_cov(h, m))
    }

    /// Deterministic part of the log-intensity at a location.
    pub fn mean_at(&self, row: Option<&[f64]>) -> f64 {
        match self {
            ClassSpec::Constant { value } => *value,
            ClassSpec::Field { mean, .. } | ClassSpec::Regression { mean } => mean.value_at(row),
        }
    }

    /// Deterministic part of the log-intensity on lattice cells.
    pub fn mean_values(&self, n_cells: usize, design: Option<&Design>) -> Result<Vec<f64>> {
        match self {
            ClassSpec::Constant { value } => Ok(vec![*value; n_cells]),
            ClassSpec::Field { mean, .. } | ClassSpec::Regression { mean } => {
                mean.values(n_cells, design)
            }
        }
    }
}

/// Interior thresholds `c_1 < … < c_{K−1}`; `c_0 = −∞`, `c_K = +∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Thresholds(Vec<f64>);

impl Thresholds {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("thresholds must be finite".into()));
        }
        if c.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "thresholds must be strictly increasing, got {c:?}"
            )));
        }
        Ok(Self(c))
    }

    pub fn interior(&self) -> &[f64] {
        &self.0
    }

    pub fn n_classes(&self) -> usize {
        self.0.len() + 1
    }

    /// `(c_{k−1}, c_k)` for zero-based class `k`.
    #[inline]
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { f64::NEG_INFINITY } else { self.0[k - 1] };
        let hi = if k == self.0.len() { f64::INFINITY } else { self.0[k] };
        (lo, hi)
    }

    /// Zero-based class of a level-set value under exact thresholding.
    pub fn classify(&self, v: f64) -> usize {
        self.0.iter().take_while(|&&c| v > c).count()
    }
}

impl TryFrom<Vec<f64>> for Thresholds {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Thresholds::new(v)
    }
}

impl From<Thresholds> for Vec<f64> {
    fn from(t: Thresholds) -> Self {
        t.0
    }
}

/// The level-set field: unit-variance Matérn with mean `μ_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetSpec {
    pub range: f64,
    pub nu: f64,
    pub mean: MeanStructure,
}

impl LevelSetSpec {
    pub fn new(range: f64, nu: f64) -> Self {
        Self {
            range,
            nu,
            mean: MeanStructure::Constant(0.0),
        }
    }

    pub fn matern(&self) -> MaternSpec {
        MaternSpec {
            sigma: 1.0,
            range: self.range,
            nu: self.nu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LscpModel {
    pub level_set: LevelSetSpec,
    pub thresholds: Thresholds,
    /// Nugget standard deviation `σ_ε`; zero means exact thresholding.
    pub nugget: f64,
    pub classes: Vec<ClassSpec>,
}

impl LscpModel {
    pub fn new(level_set: LevelSetSpec, thresholds: Thresholds, nugget: f64, classes: Vec<ClassSpec>) -> Result<Self> {
        let m = Self {
            level_set,
            thresholds,
            nugget,
            classes,
        };
        m.validate()?;
        Ok(m)
    }

    /// A log-Gaussian Cox process: one class, no level set in effect.
    pub fn lgcp(matern: MaternSpec, mean: MeanStructure) -> Self {
        Self {
            level_set: LevelSetSpec::new(1.0, 1.0),
            thresholds: Thresholds(vec![]),
            nugget: 0.0,
            classes: vec![ClassSpec::Field { matern, mean }],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidParameter("model needs at least one class".into()));
        }
        if self.classes.len() != self.thresholds.n_classes() {
            return Err(Error::InvalidParameter(format!(
                "{} classes but {} threshold intervals",
                self.classes.len(),
                self.thresholds.n_classes()
            )));
        }
        if !(self.nugget >= 0.0 && self.nugget.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "nugget must be finite and non-negative, got {}",
                self.nugget
            )));
        }
        self.level_set.matern().validate()?;
        for c in &self.classes {
            match c {
                ClassSpec::Field { matern, .. } => matern.validate()?,
                ClassSpec::Constant { value } if !value.is_finite() => {
                    return Err(Error::InvalidParameter("constant class value must be finite".into()))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Class label per lattice cell, zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationField {
    pub gamma: Vec<u8>,
}

impl ClassificationField {
    pub fn uniform(n: usize, k: u8) -> Self {
        Self { gamma: vec![k; n] }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Fraction of cells carrying class `k`.
    pub fn fraction(&self, k: u8) -> f64 {
        self.gamma.iter().filter(|&&g| g == k).count() as f64 / self.gamma.len().max(1) as f64
    }
}

/// Ordered-probit class log-probabilities for one cell with level-set value
/// `v`. With `sigma_eps = 0` the class is determined by thresholding.
pub fn class_log_probs(v: f64, thresholds: &Thresholds, sigma_eps: f64, out: &mut [f64]) {
    let k = thresholds.n_classes();
    if sigma_eps <= 0.0 {
        let c = thresholds.classify(v);
        for (i, o) in out.iter_mut().enumerate().take(k) {
            *o = if i == c { 0.0 } else { f64::NEG_INFINITY };
        }
        return;
    }
    for (i, o) in out.iter_mut().enumerate().take(k) {
        let (lo, hi) = thresholds.bounds(i);
        *o = log_norm_interval((lo - v) / sigma_eps, (hi - v) / sigma_eps);
    }
}

/// Per-cell class probabilities, row-major `n × K`.
pub fn class_probabilities(v: &[f64], thresholds: &Thresholds, sigma_eps: f64) -> Vec<Vec<f64>> {
    let k = thresholds.n_classes();
    v.iter()
        .map(|&vj| {
            if sigma_eps <= 0.0 {
                let c = thresholds.classify(vj);
                return (0..k).map(|i| if i == c { 1.0 } else { 0.0 }).collect();
            }
            let cdf: Vec<f64> = (0..=k)
                .map(|i| {
                    if i == 0 {
                        0.0
                    } else if i == k {
                        1.0
                    } else {
                        norm_cdf((thresholds.0[i - 1] - vj) / sigma_eps)
                    }
                })
                .collect();
            let mut p: Vec<f64> = cdf.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
            p
        })
        .collect()
}

/// `log λ̃_j = X_{Γ_j}(s_j) + μ_{Γ_j}(s_j)`. For constant or regression
/// classes pass a zero field and put the value in `means`.
pub fn assemble_log_intensity(
    fields: &[&[f64]],
    means: &[&[f64]],
    gamma: &ClassificationField,
) -> Result<Vec<f64>> {
    let n = gamma.len();
    if fields.len() != means.len() {
        return Err(Error::Shape(format!(
            "{} class fields but {} class means",
            fields.len(),
            means.len()
        )));
    }
    for (f, m) in fields.iter().zip(means) {
        if f.len() != n || m.len() != n {
            return Err(Error::Shape(format!(
                "class surfaces must have {n} cells, got {} and {}",
                f.len(),
                m.len()
            )));
        }
    }
    gamma
        .gamma
        .iter()
        .enumerate()
        .map(|(j, &g)| {
            let k = g as usize;
            if k >= fields.len() {
                return Err(Error::Shape(format!("class label {k} out of range at cell {j}")));
            }
            Ok(fields[k][j] + means[k][j])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two() -> Thresholds {
        Thresholds::new(vec![0.0]).unwrap()
    }

    #[test]
    fn symmetric_at_threshold() {
        for s in [0.01, 0.3, 2.0] {
            let p = class_probabilities(&[0.0], &two(), s);
            assert!((p[0][0] - 0.5).abs() < 1e-15);
            assert!((p[0][1] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn reference_probit_value() {
        let p = class_probabilities(&[1.0], &two(), 1.0);
        assert!((p[0][0] - 0.158_655_253_931_457_05).abs() < 1e-12, "{:?}", p);
        assert!((p[0][1] - 0.841_344_746_068_542_9).abs() < 1e-12);
        let mut lp = [0.0; 2];
        class_log_probs(1.0, &two(), 1.0, &mut lp);
        assert!((lp[0].exp() - p[0][0]).abs() < 1e-12);
    }

    #[test]
    fn zero_nugget_is_thresholding() {
        let p = class_probabilities(&[-0.2, 0.3], &two(), 0.0);
        assert_eq!(p[0], vec![1.0, 0.0]);
        assert_eq!(p[1], vec![0.0, 1.0]);
        let tiny = class_probabilities(&[-0.2], &two(), 1e-6);
        assert!((tiny[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assembly_examples() {
        let g = ClassificationField { gamma: vec![1, 0] };
        let x = [vec![0.0, 0.5], vec![0.3, 9.0]];
        let m = [vec![2.0, 2.0], vec![-1.0, -1.0]];
        let li = assemble_log_intensity(&[&x[0], &x[1]], &[&m[0], &m[1]], &g).unwrap();
        assert!((li[0] - (-0.7)).abs() < 1e-15);
        assert!((li[1] - 2.5).abs() < 1e-15);
        let bad = assemble_log_intensity(&[&x[0][..1]], &[&m[0][..1]], &g);
        assert!(bad.is_err());
    }

    #[test]
    fn single_class_is_lgcp() {
        let g = ClassificationField::uniform(3, 0);
        let x = vec![0.1, -0.2, 0.4];
        let m = vec![1.0; 3];
        let li = assemble_log_intensity(&[&x], &[&m], &g).unwrap();
        assert_eq!(li, vec![1.1, 0.8, 1.4]);
        let one = Thresholds::new(vec![]).unwrap();
        for s in [0.0, 0.5] {
            assert_eq!(class_probabilities(&[3.0, -3.0], &one, s), vec![vec![1.0], vec![1.0]]);
        }
    }

    #[test]
    fn thresholds_validate() {
        assert!(Thresholds::new(vec![0.0, 0.0]).is_err());
        assert!(Thresholds::new(vec![1.0, 0.0]).is_err());
        let t = Thresholds::new(vec![-1.0, 1.0]).unwrap();
        assert_eq!(t.classify(-2.0), 0);
        assert_eq!(t.classify(-1.0), 0);
        assert_eq!(t.classify(0.0), 1);
        assert_eq!(t.classify(5.0), 2);
    }

    #[test]
    fn model_validation() {
        let ls = LevelSetSpec::new(0.4, 1.0);
        let ok = LscpModel::new(ls.clone(), two(), 0.1, vec![ClassSpec::constant(0.0), ClassSpec::constant(1.0)]);
        assert!(ok.is_ok());
        let bad = LscpModel::new(ls, two(), 0.1, vec![ClassSpec::constant(0.0)]);
        assert!(bad.is_err());
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_order(
            v in -6.0f64..6.0, dv in 0.0f64..3.0, s in 0.01f64..3.0,
            c in proptest::collection::vec(-3.0f64..3.0, 1..4),
        ) {
            let mut c = c;
            c.sort_by(|a, b| a.total_cmp(b));
            c.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            let t = Thresholds::new(c).unwrap();
            let p = class_probabilities(&[v, v + dv], &t, s);
            for row in &p {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            // stochastic ordering: the CDF over classes drops as v grows
            let (mut a, mut b) = (0.0, 0.0);
            for k in 0..t.n_classes() {
                a += p[0][k];
                b += p[1][k];
                prop_assert!(b <= a + 1e-12);
            }
        }
    }
}
