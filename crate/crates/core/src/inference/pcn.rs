//! Preconditioned Crank–Nicolson Langevin updates of whitened fields.
//!
//! In whitened coordinates the field prior is standard Gaussian, so the
//! proposal `v = [(2−δ)u − 2δ∇Φ(u) + √(8δ) w] / (2+δ)` leaves the prior
//! invariant when `∇Φ = 0` and the acceptance ratio involves only the
//! likelihood potential `Φ`.

use num_complex::Complex64;
use rand::Rng;

use super::likelihood::{poisson_term, probit_term};
use super::state::{FieldState, FitData};
use crate::grf::{norm_sq, SpectralGrid};
use crate::model::ClassificationField;

/// Potential `Φ` (negative log-likelihood), its gradient in `ẑ`, and the
/// window values it was computed from.
#[derive(Debug, Clone)]
pub struct PcnEval {
    pub phi: f64,
    pub grad: Vec<Complex64>,
    pub values: Vec<f64>,
}

/// Class `k` Poisson potential over the cells currently assigned to it.
pub fn class_potential(
    field: &FieldState,
    mean: &[f64],
    k: usize,
    gamma: &ClassificationField,
    data: &FitData,
    white: &[Complex64],
) -> PcnEval {
    let values = field.basis.synthesize(&field.grid, white);
    let area = data.cell_area();
    let y = &data.counts.counts;
    let mut phi = 0.0;
    let mut d = vec![0.0; values.len()];
    for (j, &g) in gamma.gamma.iter().enumerate() {
        if g as usize != k {
            continue;
        }
        let (ll, dl) = poisson_term(y[j], area, values[j] + mean[j]);
        phi -= ll;
        d[j] = -dl;
    }
    PcnEval {
        phi,
        grad: field.basis.adjoint(&field.grid, &d),
        values,
    }
}

/// Level-set probit potential `−Σ ln P(Γ_j | v_j)`.
pub fn level_set_potential(
    field: &FieldState,
    mean: &[f64],
    thresholds: &[f64],
    nugget: f64,
    gamma: &ClassificationField,
    white: &[Complex64],
) -> PcnEval {
    let values = field.basis.synthesize(&field.grid, white);
    let mut phi = 0.0;
    let mut d = vec![0.0; values.len()];
    for (j, &g) in gamma.gamma.iter().enumerate() {
        let t = probit_term(g as usize, values[j] + mean[j], thresholds, nugget);
        phi -= t.logp;
        d[j] = -t.d_v;
    }
    PcnEval {
        phi,
        grad: field.basis.adjoint(&field.grid, &d),
        values,
    }
}

/// `ρ(u, v)` of the pCN-MALA acceptance ratio, with `Φ` and gradient at `u`.
fn rho(u: &[Complex64], v: &[Complex64], phi_u: f64, g_u: &[Complex64], delta: f64) -> f64 {
    let mut diff = 0.0;
    let mut sum = 0.0;
    for ((a, b), g) in u.iter().zip(v).zip(g_u) {
        let d = b - a;
        let s = a + b;
        diff += d.re * g.re + d.im * g.im;
        sum += s.re * g.re + s.im * g.im;
    }
    phi_u + 0.5 * diff + 0.25 * delta * sum + 0.25 * delta * norm_sq(g_u)
}

/// Log acceptance ratio for a move `u → v`.
pub fn log_accept(u: &[Complex64], v: &[Complex64], eu: &PcnEval, ev: &PcnEval, delta: f64) -> f64 {
    rho(u, v, eu.phi, &eu.grad, delta) - rho(v, u, ev.phi, &ev.grad, delta)
}

/// pCN-MALA proposal from `u` with gradient `g` and Hermitian noise `w`.
pub fn propose(u: &[Complex64], g: &[Complex64], w: &[Complex64], delta: f64) -> Vec<Complex64> {
    let a = (2.0 - delta) / (2.0 + delta);
    let b = 2.0 * delta / (2.0 + delta);
    let c = (8.0 * delta).sqrt() / (2.0 + delta);
    u.iter()
        .zip(g)
        .zip(w)
        .map(|((u, g), w)| u * a - g * b + w * c)
        .collect()
}

/// Per-coefficient scales `(1 + w_m S)^{−1/2}` of a Gaussian approximation
/// to the posterior, where `w` are the basis weights and `S` the summed
/// likelihood curvature over the window; `w_m S` is the exact diagonal of
/// the likelihood Hessian in whitened coordinates when the curvature is
/// constant in the field.
pub fn curvature_scales(sqrt_weights: &[f64], curvature: f64) -> Vec<f64> {
    sqrt_weights
        .iter()
        .map(|s| 1.0 / (1.0 + s * s * curvature.max(0.0)).sqrt())
        .collect()
}

/// Potential and gradient in the scaled coordinates `y = u / p`, where the
/// reference measure is `N(0, diag(p²))`: `Ψ = Φ − ½ Σ d_m |u_m|²` with
/// `d_m = p_m^{−2} − 1`.
fn to_scaled(u: &[Complex64], e: &PcnEval, p: &[f64]) -> (Vec<Complex64>, f64, Vec<Complex64>) {
    let mut psi = e.phi;
    let mut y = Vec::with_capacity(u.len());
    let mut g = Vec::with_capacity(u.len());
    for ((z, gz), &pm) in u.iter().zip(&e.grad).zip(p) {
        let d = 1.0 / (pm * pm) - 1.0;
        psi -= 0.5 * d * z.norm_sqr();
        y.push(z / pm);
        g.push((gz - z * d) * pm);
    }
    (y, psi, g)
}

/// One pCN-MALA step on `white`. With `scales`, the step runs in the
/// coordinates `ẑ / p`, which is exact for the same target and reduces to
/// the plain step when every scale is one. Returns the acceptance
/// probability and, if accepted, the new coefficients with their evaluation.
pub fn pcn_step<R, F>(
    grid: &SpectralGrid,
    white: &[Complex64],
    cur: &PcnEval,
    delta: f64,
    scales: Option<&[f64]>,
    potential: F,
    rng: &mut R,
) -> (f64, Option<(Vec<Complex64>, PcnEval)>)
where
    R: Rng + ?Sized,
    F: Fn(&[Complex64]) -> PcnEval,
{
    let w = grid.white_noise(rng);
    let (v, ev, la) = match scales {
        None => {
            let v = propose(white, &cur.grad, &w, delta);
            let ev = potential(&v);
            if !ev.phi.is_finite() {
                return (0.0, None);
            }
            let la = log_accept(white, &v, cur, &ev, delta);
            (v, ev, la)
        }
        Some(p) => {
            let (y, psi, gy) = to_scaled(white, cur, p);
            let y1 = propose(&y, &gy, &w, delta);
            let v: Vec<Complex64> = y1.iter().zip(p).map(|(z, pm)| z * pm).collect();
            let ev = potential(&v);
            if !ev.phi.is_finite() {
                return (0.0, None);
            }
            let (_, psi1, gy1) = to_scaled(&v, &ev, p);
            let la = rho(&y, &y1, psi, &gy, delta) - rho(&y1, &y, psi1, &gy1, delta);
            (v, ev, la)
        }
    };
    let alpha = if la.is_nan() { 0.0 } else { la.min(0.0).exp() };
    let accepted = rng.random::<f64>() < alpha;
    (alpha, accepted.then_some((v, ev)))
}

/// Robbins–Monro update of `δ` toward the target acceptance rate.
pub fn adapt_delta(delta: f64, t: usize, alpha: f64, target: f64) -> f64 {
    let gamma = (t as f64 + 1.0).powf(-0.6);
    (delta.ln() + gamma * (alpha - target)).exp().clamp(1e-6, 2.0)
}
