use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{bessel_k, gamma};

/// Matérn covariance hyperparameters. `range` is the distance at which the
/// correlation drops to roughly 0.1; `kappa = sqrt(8 nu) / range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternSpec {
    pub sigma: f64,
    pub range: f64,
    pub nu: f64,
}

impl MaternSpec {
    pub fn new(sigma: f64, range: f64, nu: f64) -> Result<Self> {
        let s = Self { sigma, range, nu };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.sigma) || !ok(self.range) || !ok(self.nu) {
            return Err(Error::InvalidParameter(format!(
                "Matérn parameters must be positive and finite: sigma={}, range={}, nu={}",
                self.sigma, self.range, self.nu
            )));
        }
        Ok(())
    }

    pub fn kappa(&self) -> f64 {
        (8.0 * self.nu).sqrt() / self.range
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn with_sigma(self, sigma: f64) -> Self {
        Self { sigma, ..self }
    }

    pub fn with_range(self, range: f64) -> Self {
        Self { range, ..self }
    }
}

/// Matérn covariance at distance `h ≥ 0`.
pub fn matern_cov(h: f64, spec: &MaternSpec) -> f64 {
    let var = spec.variance();
    let x = spec.kappa() * h.abs();
    if x < 1e-12 {
        return var;
    }
    let nu = spec.nu;
    if (nu - 0.5).abs() < 1e-15 {
        return var * (-x).exp();
    }
    if x > 700.0 {
        return 0.0;
    }
    var * 2f64.powf(1.0 - nu) / gamma(nu) * x.powf(nu) * bessel_k(nu, x)
}

/// Matérn correlation at distance `h`.
pub fn matern_corr(h: f64, spec: &MaternSpec) -> f64 {
    matern_cov(h, &spec.with_sigma(1.0))
}

/// Spectral density of the planar Matérn field, with frequency in cycles
/// per unit length, normalised so that it integrates to `sigma²` over ℝ².
pub fn matern_spectral_density(freq: [f64; 2], spec: &MaternSpec) -> f64 {
    let k2 = spec.kappa().powi(2);
    let q = 4.0 * std::f64::consts::PI.powi(2) * (freq[0] * freq[0] + freq[1] * freq[1]);
    4.0 * std::f64::consts::PI * spec.nu * spec.variance() * k2.powf(spec.nu)
        * (k2 + q).powf(-(spec.nu + 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lag_is_variance() {
        let s = MaternSpec::new(1.7, 0.3, 1.3).unwrap();
        assert!((matern_cov(0.0, &s) - 1.7 * 1.7).abs() < 1e-14);
        // continuity at the origin
        assert!((matern_cov(1e-9, &s) - 1.7 * 1.7).abs() < 1e-6);
    }

    #[test]
    fn half_order_is_exponential() {
        let s = MaternSpec::new(1.0, 0.4, 0.5).unwrap();
        assert!((s.kappa() - 5.0).abs() < 1e-14);
        for &h in &[0.01, 0.1, 0.37, 1.0] {
            assert!((matern_cov(h, &s) - (-5.0 * h).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn kappa_for_unit_smoothness() {
        let s = MaternSpec::new(1.0, 0.4, 1.0).unwrap();
        assert!((s.kappa() - 7.071_067_811_865_475).abs() < 1e-12);
    }

    #[test]
    fn correlation_near_point_one_at_range() {
        for nu in [0.5, 1.0, 2.0, 3.0] {
            let s = MaternSpec::new(1.0, 2.0, nu).unwrap();
            let c = matern_corr(2.0, &s);
            assert!(c > 0.05 && c < 0.16, "nu={nu}: corr at range {c}");
        }
    }

    #[test]
    fn cov_decreasing_in_distance() {
        let s = MaternSpec::new(1.0, 0.3, 1.0).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let c = matern_cov(i as f64 * 0.01, &s);
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn density_mode_and_scaling() {
        let s = MaternSpec::new(1.0, 0.3, 1.0).unwrap();
        let d0 = matern_spectral_density([0.0, 0.0], &s);
        let mut prev = d0;
        for i in 1..50 {
            let d = matern_spectral_density([i as f64 * 0.5, 0.0], &s);
            assert!(d < prev);
            prev = d;
        }
        let s2 = s.with_sigma(2.0);
        for f in [[0.0, 0.0], [1.0, 2.0], [7.0, -3.0]] {
            let r = matern_spectral_density(f, &s2) / matern_spectral_density(f, &s);
            assert!((r - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn density_integrates_to_variance() {
        // midpoint quadrature over a fine frequency grid is the oracle
        let s = MaternSpec::new(1.3, 0.3, 1.0).unwrap();
        let (n, fmax) = (2048usize, 200.0);
        let df = 2.0 * fmax / n as f64;
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                let fx = -fmax + (i as f64 + 0.5) * df;
                let fy = -fmax + (j as f64 + 0.5) * df;
                total += matern_spectral_density([fx, fy], &s);
            }
        }
        total *= df * df;
        assert!((total / s.variance() - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MaternSpec::new(0.0, 1.0, 1.0).is_err());
        assert!(MaternSpec::new(1.0, -1.0, 1.0).is_err());
        assert!(MaternSpec::new(1.0, 1.0, f64::NAN).is_err());
    }
}
