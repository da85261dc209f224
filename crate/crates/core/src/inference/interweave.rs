//! Centred random-walk moves on field hyperparameters.
//!
//! Each move changes a parameter while holding the field on the whole
//! extended grid fixed (`√w ⊙ ẑ` unchanged, or shifted by a constant), so
//! the likelihood cancels and only prior terms and the Jacobian of the
//! coefficient map enter the acceptance ratio. Alternating these with the
//! non-centred updates lets scale, range and level parameters move even when
//! the data pin the field values.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::priors::{PriorConfig, RangeBounds};
use super::state::FieldState;
use crate::grf::{MaternSpec, SpectralBasis};

/// Random-walk scale adapted toward a target acceptance rate.
#[derive(Debug, Clone, Copy)]
pub struct RwScale {
    pub scale: f64,
}

impl Default for RwScale {
    fn default() -> Self {
        Self { scale: 0.1 }
    }
}

impl RwScale {
    pub const TARGET: f64 = 0.44;

    pub fn adapt(&mut self, t: usize, alpha: f64) {
        let g = (t as f64 + 1.0).powf(-0.6);
        self.scale = (self.scale.ln() + g * (alpha - Self::TARGET)).exp().clamp(1e-5, 5.0);
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale * rng.sample::<f64, _>(StandardNormal)
    }
}

fn accept<R: Rng + ?Sized>(log_a: f64, rng: &mut R) -> (f64, bool) {
    let a = if log_a.is_nan() { 0.0 } else { log_a.min(0.0).exp() };
    (a, rng.random::<f64>() < a)
}

/// Coefficients for a new basis holding `√w ⊙ ẑ` fixed, with the log
/// Jacobian and the change in `−½|ẑ|²`.
fn remap(white: &[Complex64], old: &SpectralBasis, new: &SpectralBasis) -> (Vec<Complex64>, f64) {
    let mut out = white.to_vec();
    let mut log_j = 0.0;
    let mut d_prior = 0.0;
    for ((z, a), b) in out.iter_mut().zip(old.sqrt_weights()).zip(new.sqrt_weights()) {
        if *a > 0.0 && *b > 0.0 {
            let r = a / b;
            let before = z.norm_sqr();
            *z *= r;
            log_j += r.ln();
            d_prior -= 0.5 * (z.norm_sqr() - before);
        }
    }
    (out, log_j + d_prior)
}

/// Log-scale move on the marginal standard deviation.
pub fn sigma_move<R: Rng + ?Sized>(field: &mut FieldState, priors: &PriorConfig, eps: f64, rng: &mut R) -> (f64, bool) {
    let spec = *field.spec();
    let sigma = spec.sigma * eps.exp();
    if !(sigma.is_finite() && sigma > 0.0) {
        return (0.0, false);
    }
    let basis = field.basis.with_sigma(sigma);
    let (white, delta) = remap(&field.white, &field.basis, &basis);
    let log_a = priors.log_sigma(sigma).0 - priors.log_sigma(spec.sigma).0 + delta;
    let (a, ok) = accept(log_a, rng);
    if ok {
        field.basis = basis;
        field.white = white;
    }
    (a, ok)
}

/// Log-scale move on the range; `sigma` is the field's fixed or current
/// scale.
pub fn range_move<R: Rng + ?Sized>(
    field: &mut FieldState,
    bounds: &RangeBounds,
    priors: &PriorConfig,
    eps: f64,
    rng: &mut R,
) -> (f64, bool) {
    let spec: MaternSpec = *field.spec();
    let range = spec.range * eps.exp();
    if !bounds.contains(range) {
        return (0.0, false);
    }
    let basis = SpectralBasis::new(&field.grid, spec.with_range(range), field.basis.order());
    let (white, delta) = remap(&field.white, &field.basis, &basis);
    let log_a = priors.log_range(range).0 - priors.log_range(spec.range).0 + delta;
    let (a, ok) = accept(log_a, rng);
    if ok {
        field.basis = basis;
        field.white = white;
    }
    (a, ok)
}

/// Change in `−½|ẑ|²` when the field on the extended grid is shifted by the
/// constant `c`, and the new zero-frequency coefficient.
pub fn shift_prior_delta(field: &FieldState, c: f64) -> (f64, Complex64) {
    let s0 = field.basis.sqrt_weights()[0];
    let z0 = field.white[0];
    let z1 = z0 + c / s0;
    (-0.5 * (z1.norm_sqr() - z0.norm_sqr()), z1)
}
