//! First and second product densities of the level-set Cox process, the
//! pair correlation function, the K-function, and a Monte-Carlo estimator of
//! the empty-space function.
//!
//! Locations enter only through their covariate rows (intercept first);
//! pass `None` when every mean is constant. The level-set field is taken
//! without nugget.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::disc_rect_overlap;
use crate::grf::matern_corr;
use crate::lattice::Lattice;
use crate::model::{Design, LscpModel, MeanStructure};
use crate::simulate::{simulate_latent, SimOrders};
use crate::special::{norm_cdf, norm_pdf};

/// Default Gauss–Legendre node count.
pub const DEFAULT_NODES: usize = 64;
/// Marginal standard deviations kept on each side of the level-set mean.
pub const TAIL_SD: f64 = 8.0;

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// `∫_a^b f` by Gauss–Legendre with the given rule.
fn integrate(rule: &(Vec<f64>, Vec<f64>), a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(c + h * x)).sum::<f64>() * h
}

fn class_mass(model: &LscpModel, k: usize, mu0: f64) -> f64 {
    let (lo, hi) = model.thresholds.bounds(k);
    norm_cdf(hi - mu0) - norm_cdf(lo - mu0)
}

/// `ρ_1(s) = Σ_k exp(μ_k(s) + r_k(0)/2) (Φ(c_k − μ_0(s)) − Φ(c_{k−1} − μ_0(s)))`.
pub fn rho1(model: &LscpModel, row: Option<&[f64]>) -> f64 {
    let mu0 = model.level_set.mean.value_at(row);
    model
        .classes
        .iter()
        .enumerate()
        .map(|(k, c)| (c.mean_at(row) + 0.5 * c.variance()).exp() * class_mass(model, k, mu0))
        .sum()
}

/// Joint class probability for a pair of level-set values with correlation
/// `rho`: the first location lies in class `k`, the second in class `l`.
/// `mu1` and `mu2` are the level-set means at the two locations.
pub fn p_lk_corr(
    l: usize,
    k: usize,
    rho: f64,
    mu1: f64,
    mu2: f64,
    thresholds: &crate::model::Thresholds,
    nodes: usize,
) -> Result<f64> {
    if nodes < 8 {
        return Err(Error::Config(format!("quadrature needs at least 8 nodes, got {nodes}")));
    }
    let (ck_lo, ck_hi) = thresholds.bounds(k);
    let (cl_lo, cl_hi) = thresholds.bounds(l);
    let a = ck_lo.max(mu1 - TAIL_SD);
    let b = ck_hi.min(mu1 + TAIL_SD);
    if b <= a {
        return Ok(0.0);
    }
    let s2 = (1.0 - rho * rho).max(0.0);
    let sd = s2.sqrt();
    let cond_mean = |u: f64| mu2 + rho * (u - mu1);

    if sd < 1e-12 {
        // second value is a deterministic function of the first
        if rho.abs() < 1e-300 {
            return Ok(0.0);
        }
        let inv = |c: f64| mu1 + (c - mu2) / rho;
        let (mut lo, mut hi) = (inv(cl_lo), inv(cl_hi));
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        let (lo, hi) = (lo.max(ck_lo), hi.min(ck_hi));
        if hi <= lo {
            return Ok(0.0);
        }
        return Ok((norm_cdf(hi - mu1) - norm_cdf(lo - mu1)).max(0.0));
    }

    let rule = gauss_legendre(nodes);
    let integrand = |u: f64| {
        let m = cond_mean(u);
        let p = norm_cdf((cl_hi - m) / sd) - norm_cdf((cl_lo - m) / sd);
        p * norm_pdf(u - mu1)
    };
    // split where the conditional mean crosses a class-l bound
    let mut cuts = vec![a, b];
    if rho.abs() > 1e-12 {
        for c in [cl_lo, cl_hi] {
            if c.is_finite() {
                let u = mu1 + (c - mu2) / rho;
                if u > a && u < b {
                    cuts.push(u);
                }
            }
        }
    }
    cuts.sort_by(|x, y| x.total_cmp(y));
    let total: f64 = cuts.windows(2).map(|w| integrate(&rule, w[0], w[1], integrand)).sum();
    Ok(total.clamp(0.0, 1.0))
}

/// Level-set correlation at distance `h`.
pub fn level_set_corr(model: &LscpModel, h: f64) -> f64 {
    matern_corr(h, &model.level_set.matern())
}

/// `p_lk` for locations a distance `h` apart.
pub fn p_lk(
    l: usize,
    k: usize,
    model: &LscpModel,
    h: f64,
    row1: Option<&[f64]>,
    row2: Option<&[f64]>,
    nodes: usize,
) -> Result<f64> {
    let mu1 = model.level_set.mean.value_at(row1);
    let mu2 = model.level_set.mean.value_at(row2);
    p_lk_corr(l, k, level_set_corr(model, h), mu1, mu2, &model.thresholds, nodes)
}

/// Second product density for locations a distance `h` apart.
pub fn rho2(model: &LscpModel, h: f64, row1: Option<&[f64]>, row2: Option<&[f64]>) -> Result<f64> {
    rho2_with(model, h, row1, row2, DEFAULT_NODES)
}

pub fn rho2_with(model: &LscpModel, h: f64, row1: Option<&[f64]>, row2: Option<&[f64]>, nodes: usize) -> Result<f64> {
    let kk = model.n_classes();
    let mu1: Vec<f64> = model.classes.iter().map(|c| c.mean_at(row1)).collect();
    let mu2: Vec<f64> = model.classes.iter().map(|c| c.mean_at(row2)).collect();
    let r0: Vec<f64> = model.classes.iter().map(|c| c.variance()).collect();
    let mut total = 0.0;
    for k in 0..kk {
        for l in 0..kk {
            // probability that the first location is in l and the second in k
            let p = if kk == 1 { 1.0 } else { p_lk(k, l, model, h, row1, row2, nodes)? };
            if p == 0.0 {
                continue;
            }
            let e = if l == k {
                mu1[k] + mu2[k] + r0[k] + model.classes[k].covariance(h)
            } else {
                mu1[l] + mu2[k] + 0.5 * (r0[k] + r0[l])
            };
            total += p * e.exp();
        }
    }
    Ok(total)
}

/// `g = ρ_2 / (ρ_1 ρ_1)`.
pub fn pair_correlation(model: &LscpModel, h: f64, row1: Option<&[f64]>, row2: Option<&[f64]>) -> Result<f64> {
    Ok(rho2(model, h, row1, row2)? / (rho1(model, row1) * rho1(model, row2)))
}

fn translation_invariant(model: &LscpModel) -> bool {
    let constant = |m: Option<&MeanStructure>| !matches!(m, Some(MeanStructure::Linear(_)));
    constant(Some(&model.level_set.mean)) && model.classes.iter().all(|c| constant(c.mean()))
}

/// `K(r) = 2π ∫_0^r g_0(h) h dh` for a translation-invariant model.
pub fn k_function(model: &LscpModel, r: f64, panels: usize) -> Result<f64> {
    if !translation_invariant(model) {
        return Err(Error::Config(
            "K-function requires constant means (translation-invariant pair correlation)".into(),
        ));
    }
    if r <= 0.0 {
        return Ok(0.0);
    }
    let rule = gauss_legendre(16);
    let denom = rho1(model, None).powi(2);
    let panels = panels.max(1);
    let mut total = 0.0;
    let mut err = None;
    for p in 0..panels {
        let a = r * p as f64 / panels as f64;
        let b = r * (p + 1) as f64 / panels as f64;
        total += integrate(&rule, a, b, |h| match rho2(model, h, None, None) {
            Ok(v) => v / denom * h,
            Err(e) => {
                err.get_or_insert(e.to_string());
                f64::NAN
            }
        });
    }
    if let Some(e) = err {
        return Err(Error::Numerical(e));
    }
    Ok(2.0 * std::f64::consts::PI * total)
}

/// Monte-Carlo empty-space function at `s0` over an r-grid. Each draw
/// integrates the simulated intensity over `B(s0, r)` using the exact area
/// of the ball inside each lattice cell and the cell-centre intensity.
/// Returns `(F(r), standard error)` per radius.
pub fn empty_space_mc<R: Rng + ?Sized>(
    s0: (f64, f64),
    radii: &[f64],
    model: &LscpModel,
    lattice: &Lattice,
    design: Option<&Design>,
    n_sims: usize,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    if n_sims < 100 {
        return Err(Error::Usage(format!("empty_space_mc needs at least 100 simulations, got {n_sims}")));
    }
    // overlap areas per radius, only for cells touching the largest ball
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let cells: Vec<usize> = (0..lattice.len())
        .filter(|&j| {
            let (x0, y0, x1, y1) = lattice.cell_bounds(j);
            disc_rect_overlap(s0.0, s0.1, rmax, x0, y0, x1, y1) > 0.0
        })
        .collect();
    let areas: Vec<Vec<f64>> = radii
        .iter()
        .map(|&r| {
            cells
                .iter()
                .map(|&j| {
                    let (x0, y0, x1, y1) = lattice.cell_bounds(j);
                    disc_rect_overlap(s0.0, s0.1, r, x0, y0, x1, y1)
                })
                .collect()
        })
        .collect();
    let mut acc = vec![crate::stats::Welford::default(); radii.len()];
    for _ in 0..n_sims {
        let latent = simulate_latent(model, lattice, design, SimOrders::default(), rng)?;
        for (ri, a) in areas.iter().enumerate() {
            let lam: f64 = cells
                .iter()
                .zip(a)
                .map(|(&j, aj)| aj * latent.log_intensity[j].exp())
                .sum();
            acc[ri].push(1.0 - (-lam).exp());
        }
    }
    Ok(acc
        .iter()
        .map(|w| (w.mean(), (w.variance() / n_sims as f64).sqrt()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ClassSpec, LevelSetSpec, Thresholds};

    fn two_class() -> LscpModel {
        LscpModel::new(
            LevelSetSpec::new(0.3, 1.0),
            Thresholds::new(vec![0.0]).unwrap(),
            0.0,
            vec![ClassSpec::field(1.0, 0.1, 1.0, 0.0), ClassSpec::field(1.0, 0.2, 1.0, 1.0)],
        )
        .unwrap()
    }

    #[test]
    fn legendre_integrates_polynomials() {
        let rule = gauss_legendre(8);
        assert!((rule.1.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // exact through degree 15
        let v = integrate(&rule, 0.0, 2.0, |x| x.powi(15));
        assert!((v - 2f64.powi(16) / 16.0).abs() < 1e-9);
        let rule = gauss_legendre(64);
        let v = integrate(&rule, 0.0, std::f64::consts::PI, f64::sin);
        assert!((v - 2.0).abs() < 1e-13);
    }

    #[test]
    fn rho1_reference() {
        let want = 0.5 * 0.5f64.exp() + 0.5 * 1.5f64.exp();
        assert!((rho1(&two_class(), None) - want).abs() < 1e-12);
        assert!((want - 3.0652).abs() < 1e-4);
    }

    #[test]
    fn p_lk_limits() {
        let t = Thresholds::new(vec![-0.3, 0.4]).unwrap();
        let m = |k: usize, mu: f64| {
            let (lo, hi) = t.bounds(k);
            norm_cdf(hi - mu) - norm_cdf(lo - mu)
        };
        for l in 0..3 {
            for k in 0..3 {
                let p = p_lk_corr(l, k, 0.0, 0.2, -0.1, &t, 64).unwrap();
                assert!((p - m(l, -0.1) * m(k, 0.2)).abs() < 1e-9, "{l}{k}");
                let p = p_lk_corr(l, k, 1.0, 0.2, 0.2, &t, 64).unwrap();
                let want = if l == k { m(k, 0.2) } else { 0.0 };
                assert!((p - want).abs() < 1e-12);
            }
        }
        assert!(p_lk_corr(0, 0, 0.5, 0.0, 0.0, &t, 7).is_err());
    }

    #[test]
    fn p_lk_sums_to_one() {
        let t = Thresholds::new(vec![-0.3, 0.4]).unwrap();
        for rho in [0.1, 0.5, 0.9, 0.999] {
            let s: f64 = (0..3)
                .flat_map(|l| (0..3).map(move |k| (l, k)))
                .map(|(l, k)| p_lk_corr(l, k, rho, 0.1, -0.2, &t, 64).unwrap())
                .sum();
            assert!((s - 1.0).abs() < 1e-6, "{rho}: {s}");
        }
    }

    #[test]
    fn rho2_single_class_limits() {
        let m = LscpModel::lgcp(
            crate::grf::MaternSpec::new(0.7, 0.2, 1.0).unwrap(),
            MeanStructure::Constant(0.3),
        );
        let at0 = rho2(&m, 0.0, None, None).unwrap();
        assert!((at0 - (2.0 * 0.3 + 2.0 * 0.49f64).exp()).abs() < 1e-12);
        let far = rho2(&m, 50.0, None, None).unwrap();
        assert!((far - rho1(&m, None).powi(2)).abs() < 1e-9);
        assert!(pair_correlation(&m, 0.0, None, None).unwrap() >= 1.0);
    }

    #[test]
    fn poisson_k_function() {
        let m = LscpModel::lgcp(
            crate::grf::MaternSpec::new(1e-8, 0.2, 1.0).unwrap(),
            MeanStructure::Constant(1.0),
        );
        for r in [0.05, 0.1, 0.3] {
            let k = k_function(&m, r, 4).unwrap();
            assert!((k - std::f64::consts::PI * r * r).abs() < 1e-10);
        }
    }

    #[test]
    fn rho2_symmetric() {
        let m = two_class();
        let a = rho2(&m, 0.13, None, None).unwrap();
        let b = rho2(&m, 0.13, None, None).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn k_function_needs_constant_means() {
        let mut m = two_class();
        m.level_set.mean = MeanStructure::Linear(vec![0.0, 1.0]);
        assert!(k_function(&m, 0.1, 4).is_err());
    }
}
