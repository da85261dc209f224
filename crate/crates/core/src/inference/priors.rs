use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{FieldRole, Lattice};

/// Prior settings. Ranges default to `[lattice spacing, extension margin]`
/// for the field's role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Variance of the normal prior on fixed effects.
    pub fixed_effect_var: f64,
    /// Variance of the normal prior on each threshold.
    pub threshold_var: f64,
    /// Mean of the exponential prior on field standard deviations.
    pub sigma_mean: f64,
    /// Mean of the truncated exponential prior on ranges.
    pub range_mean: f64,
    pub range_lower: Option<f64>,
    pub range_upper_level_set: Option<f64>,
    pub range_upper_class: Option<f64>,
    /// Mean of the truncated exponential prior on the nugget std.
    pub nugget_mean: f64,
    pub nugget_upper: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            fixed_effect_var: 10.0,
            threshold_var: 4.0,
            sigma_mean: 2.0,
            range_mean: 200.0,
            range_lower: None,
            range_upper_level_set: None,
            range_upper_class: None,
            nugget_mean: 0.1,
            nugget_upper: 1.0,
        }
    }
}

/// Support of a range prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeBounds {
    pub lo: f64,
    pub hi: f64,
}

impl RangeBounds {
    pub fn contains(&self, r: f64) -> bool {
        r >= self.lo && r <= self.hi
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("prior setting {name} must be positive, got {v}")))
            }
        };
        pos("fixed_effect_var", self.fixed_effect_var)?;
        pos("threshold_var", self.threshold_var)?;
        pos("sigma_mean", self.sigma_mean)?;
        pos("range_mean", self.range_mean)?;
        pos("nugget_mean", self.nugget_mean)?;
        pos("nugget_upper", self.nugget_upper)?;
        Ok(())
    }

    pub fn range_bounds(&self, lattice: &Lattice, role: FieldRole) -> Result<RangeBounds> {
        let lo = self.range_lower.unwrap_or_else(|| lattice.spacing());
        let hi = match role {
            FieldRole::LevelSet => self.range_upper_level_set,
            FieldRole::Class => self.range_upper_class,
        }
        .unwrap_or_else(|| lattice.margins().get(role));
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::Config(format!(
                "range prior support [{lo}, {hi}] is empty for the {role:?} field; \
                 the extension margin must exceed the lattice spacing"
            )));
        }
        Ok(RangeBounds { lo, hi })
    }

    /// Normal prior on a fixed effect: value and derivative.
    #[inline]
    pub fn beta(&self, b: f64) -> (f64, f64) {
        (-0.5 * b * b / self.fixed_effect_var, -b / self.fixed_effect_var)
    }

    #[inline]
    pub fn threshold(&self, c: f64) -> (f64, f64) {
        (-0.5 * c * c / self.threshold_var, -c / self.threshold_var)
    }

    /// Exponential prior on `σ` in log coordinates, Jacobian included.
    #[inline]
    pub fn log_sigma(&self, sigma: f64) -> (f64, f64) {
        log_scale_exponential(sigma, self.sigma_mean)
    }

    #[inline]
    pub fn log_range(&self, range: f64) -> (f64, f64) {
        log_scale_exponential(range, self.range_mean)
    }

    #[inline]
    pub fn log_nugget(&self, nugget: f64) -> (f64, f64) {
        log_scale_exponential(nugget, self.nugget_mean)
    }
}

/// `ln p(x) + ln x` for `x ~ Exp(mean m)`, and its derivative in `ln x`.
#[inline]
fn log_scale_exponential(x: f64, m: f64) -> (f64, f64) {
    (-x / m + x.ln(), -x / m + 1.0)
}
