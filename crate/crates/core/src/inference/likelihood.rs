//! Per-cell likelihood terms and their partial derivatives.

use crate::special::log_norm_interval_grad;

/// Class bounds `(c_{k−1}, c_k)` from interior thresholds.
#[inline]
pub fn bounds(k: usize, th: &[f64]) -> (f64, f64) {
    let lo = if k == 0 { f64::NEG_INFINITY } else { th[k - 1] };
    let hi = if k == th.len() { f64::INFINITY } else { th[k] };
    (lo, hi)
}

/// Ordered-probit term `ln P(Γ = k | v)` with nugget `sigma` and its partial
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitTerm {
    pub logp: f64,
    pub d_v: f64,
    pub d_lo: f64,
    pub d_hi: f64,
    pub d_sigma: f64,
}

#[inline]
pub fn probit_term(k: usize, v: f64, th: &[f64], sigma: f64) -> ProbitTerm {
    let (lo, hi) = bounds(k, th);
    let a = (lo - v) / sigma;
    let b = (hi - v) / sigma;
    let (logp, da, db) = log_norm_interval_grad(a, b);
    let d_lo = da / sigma;
    let d_hi = db / sigma;
    let mut d_sigma = 0.0;
    if a.is_finite() {
        d_sigma -= a * da / sigma;
    }
    if b.is_finite() {
        d_sigma -= b * db / sigma;
    }
    ProbitTerm {
        logp,
        d_v: -(d_lo + d_hi),
        d_lo,
        d_hi,
        d_sigma,
    }
}

/// `y L − a e^L` (the Poisson log-pmf up to `ln y!`) and its derivative in `L`.
#[inline]
pub fn poisson_term(y: u32, area: f64, l: f64) -> (f64, f64) {
    let m = area * l.exp();
    (y as f64 * l - m, y as f64 - m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probit_partials_match_finite_differences() {
        let th = [-0.4, 0.3];
        let h = 1e-6;
        for k in 0..3 {
            for &(v, s) in &[(0.1, 0.2), (-1.0, 0.5), (2.0, 0.05), (0.29, 0.01)] {
                let t = probit_term(k, v, &th, s);
                let f = |v: f64, th: &[f64], s: f64| probit_term(k, v, th, s).logp;
                let dv = (f(v + h, &th, s) - f(v - h, &th, s)) / (2.0 * h);
                let ds = (f(v, &th, s + h) - f(v, &th, s - h)) / (2.0 * h);
                assert!((dv - t.d_v).abs() < 1e-5 * (1.0 + dv.abs()), "k={k} v={v}: {dv} vs {}", t.d_v);
                assert!((ds - t.d_sigma).abs() < 1e-5 * (1.0 + ds.abs()));
                if k > 0 {
                    let mut up = th;
                    up[k - 1] += h;
                    let mut dn = th;
                    dn[k - 1] -= h;
                    let d = (f(v, &up, s) - f(v, &dn, s)) / (2.0 * h);
                    assert!((d - t.d_lo).abs() < 1e-5 * (1.0 + d.abs()));
                }
                if k < 2 {
                    let mut up = th;
                    up[k] += h;
                    let mut dn = th;
                    dn[k] -= h;
                    let d = (f(v, &up, s) - f(v, &dn, s)) / (2.0 * h);
                    assert!((d - t.d_hi).abs() < 1e-5 * (1.0 + d.abs()));
                }
            }
        }
    }

    #[test]
    fn single_class_probit_is_certain() {
        let t = probit_term(0, 3.0, &[], 0.1);
        assert_eq!(t.logp, 0.0);
        assert_eq!(t.d_v, 0.0);
        assert_eq!(t.d_sigma, 0.0);
    }
}
