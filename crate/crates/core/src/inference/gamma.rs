//! Gibbs update of the classification field.

use rand::Rng;

use super::likelihood::{poisson_term, probit_term};
use super::state::ChainState;
use super::FitData;
use crate::model::ClassificationField;

/// Normalised conditional class probabilities from per-class log weights.
pub fn normalize_log_weights(log_w: &[f64], out: &mut [f64]) {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        // Every class impossible numerically; fall back to uniform.
        let u = 1.0 / log_w.len() as f64;
        out.iter_mut().for_each(|o| *o = u);
        return;
    }
    let mut s = 0.0;
    for (o, &l) in out.iter_mut().zip(log_w) {
        *o = (l - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

/// Per-cell conditional log weights `ln P(Γ_j = k | v_j) + y_j L_{k,j} − a e^{L_{k,j}}`.
pub fn cell_log_weights(state: &ChainState, data: &FitData, j: usize, out: &mut [f64]) {
    let y = data.counts.counts[j];
    let area = data.cell_area();
    for (k, o) in out.iter_mut().enumerate() {
        let prior = match &state.level_set {
            Some(ls) => probit_term(k, ls.v(j), &ls.thresholds, ls.nugget).logp,
            None => 0.0,
        };
        *o = prior + poisson_term(y, area, state.classes[k].surface(j)).0;
    }
}

/// Per-cell, per-class Poisson log-likelihood `y L_k − a e^{L_k}`, cell-major.
pub fn class_log_likelihoods(state: &ChainState, data: &FitData) -> Vec<f64> {
    let area = data.cell_area();
    let k = state.n_classes();
    let mut out = Vec::with_capacity(data.lattice.len() * k);
    for (j, &y) in data.counts.counts.iter().enumerate() {
        for c in &state.classes {
            out.push(poisson_term(y, area, c.surface(j)).0);
        }
    }
    out
}

/// `Σ_j ln Σ_k P(Γ_j = k | v_j) p(y_j | k)` with `Γ` summed out, for
/// thresholds `th` and nugget `sigma`; `ll` from [`class_log_likelihoods`].
pub fn marginal_log_likelihood(v: impl Fn(usize) -> f64, th: &[f64], sigma: f64, ll: &[f64], n: usize) -> f64 {
    let k = th.len() + 1;
    let mut total = 0.0;
    let mut lw = vec![0.0; k];
    for j in 0..n {
        let vj = v(j);
        for (i, w) in lw.iter_mut().enumerate() {
            *w = probit_term(i, vj, th, sigma).logp + ll[j * k + i];
        }
        let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        total += m + lw.iter().map(|w| (w - m).exp()).sum::<f64>().ln();
    }
    total
}

/// Draw `Γ` from its full conditional, independently across cells.
pub fn gibbs_gamma<R: Rng + ?Sized>(state: &ChainState, data: &FitData, rng: &mut R) -> ClassificationField {
    let k = state.n_classes();
    let n = data.lattice.len();
    if k == 1 {
        return ClassificationField::uniform(n, 0);
    }
    let mut lw = vec![0.0; k];
    let mut p = vec![0.0; k];
    let gamma = (0..n)
        .map(|j| {
            cell_log_weights(state, data, j, &mut lw);
            normalize_log_weights(&lw, &mut p);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, pi) in p.iter().enumerate() {
                acc += pi;
                if u < acc {
                    return i as u8;
                }
            }
            (k - 1) as u8
        })
        .collect();
    ClassificationField { gamma }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_matches_enumeration() {
        // One cell, two classes: ln[P(1) p(y|1) + P(2) p(y|2)].
        let ll = [-1.0, -2.5];
        let (v, c, s) = (0.2, 0.0, 0.5);
        let p1 = crate::special::norm_cdf((c - v) / s);
        let want = (p1 * (-1.0f64).exp() + (1.0 - p1) * (-2.5f64).exp()).ln();
        let got = marginal_log_likelihood(|_| v, &[c], s, &ll, 1);
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn log_weights_normalise() {
        let mut p = [0.0; 3];
        normalize_log_weights(&[-1000.0, -1001.0, f64::NEG_INFINITY], &mut p);
        assert!((p[0] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-12);
        assert_eq!(p[2], 0.0);
        normalize_log_weights(&[f64::NEG_INFINITY; 3], &mut p);
        assert!((p[1] - 1.0 / 3.0).abs() < 1e-15);
    }
}
