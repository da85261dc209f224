//! Acceptance criteria, one PASS/FAIL/SKIP line each.
//!
//! Runs as a plain binary (`harness = false`). `ACCEPTANCE_ONLY=C1,C5`
//! restricts the run; `LSCP_BCI_DIR` enables the data-dependent check.

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use lscp::data::{
    bicubic_to_lattice, holm_bonferroni, load_pattern, load_raster, sobel_slope, standardize, vif_prune,
    CovariateStack,
};
use lscp::geometry::{PointPattern, Window};
use lscp::grf::{
    cholesky_factor, matern_cov, sample_fft, sample_with_factor, MaternSpec, SpectralGrid,
};
use lscp::inference::pcn::{curvature_scales, pcn_step, PcnEval};
use lscp::inference::*;
use lscp::lattice::{bin_points, CountGrid, FieldRole, Lattice, Margins};
use lscp::model::*;
use lscp::moments::{empty_space_mc, p_lk_corr, rho1};
use lscp::simulate::{draw_counts, simulate_latent, simulate_realization, SimOrders};
use lscp::stats::{ks_two_sample, Welford};
use lscp::summaries::{envelope, linear_grid, simulate_pattern, EnvelopeSource, Statistic};
use lscp::convergence::{refine_study, OrderLevel, RefineConfig};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

enum Verdict {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: String) -> Self {
        Self { verdict: if pass { Verdict::Pass } else { Verdict::Fail }, detail }
    }
}

fn z_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

// ---------------------------------------------------------------------------

fn c1_fft_vs_cholesky() -> Outcome {
    let lattice = Lattice::new(Window::unit(), 16, 16, Margins::uniform(0.6)).unwrap();
    let spec = MaternSpec::new(1.0, 0.3, 1.0).unwrap();
    let n = lattice.len();
    let draws = 5000;

    // 10 point evaluations and 10 dense random contrasts, fixed in advance
    let mut frng = ChaCha8Rng::seed_from_u64(20);
    let mut functionals: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            let mut w = vec![0.0; n];
            w[(i * 37 + 5) % n] = 1.0;
            w
        })
        .collect();
    for _ in 0..10 {
        let w: Vec<f64> = (0..n).map(|_| frng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt()).collect();
        functionals.push(w);
    }
    let apply = |x: &[f64]| -> Vec<f64> {
        functionals.iter().map(|w| w.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    };

    let lags: Vec<(usize, usize)> = (0..=4).flat_map(|dy| (0..=4).map(move |dx| (dx, dy))).collect();
    let lag_products = |x: &[f64], acc: &mut [Welford]| {
        for (l, &(dx, dy)) in lags.iter().enumerate() {
            for iy in 0..16 - dy {
                for ix in 0..16 - dx {
                    acc[l].push(x[lattice.index(ix, iy)] * x[lattice.index(ix + dx, iy + dy)]);
                }
            }
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut fft_f = vec![Vec::with_capacity(draws); functionals.len()];
    let mut chol_f = vec![Vec::with_capacity(draws); functionals.len()];
    let mut fft_cov = vec![Welford::default(); lags.len()];
    let mut chol_cov = vec![Welford::default(); lags.len()];
    let l = cholesky_factor(&spec, &lattice).unwrap();
    for _ in 0..draws {
        let x = sample_fft(spec, &lattice, FieldRole::LevelSet, &mut rng).values;
        lag_products(&x, &mut fft_cov);
        for (f, v) in fft_f.iter_mut().zip(apply(&x)) {
            f.push(v);
        }
        let y = sample_with_factor(&l, &mut rng);
        lag_products(&y, &mut chol_cov);
        for (f, v) in chol_f.iter_mut().zip(apply(&y)) {
            f.push(v);
        }
    }
    let min_p = fft_f.iter().zip(&chol_f).map(|(a, b)| ks_two_sample(a, b).1).fold(1.0, f64::min);
    let bonf = 0.01 / functionals.len() as f64;
    let h = lattice.cell_width();
    let err = |acc: &[Welford]| {
        lags.iter()
            .zip(acc)
            .map(|(&(dx, dy), w)| (w.mean() - matern_cov(h * ((dx * dx + dy * dy) as f64).sqrt(), &spec)).abs())
            .fold(0.0, f64::max)
    };
    let (e_fft, e_chol) = (err(&fft_cov), err(&chol_cov));
    Outcome::check(
        min_p > bonf && e_fft < 0.05,
        format!("min KS p {min_p:.4} (> {bonf:.1e}); max lag-cov error FFT {e_fft:.4}, Cholesky {e_chol:.4} (< 0.05)"),
    )
}

fn c2_first_moment() -> Outcome {
    let model = LscpModel::new(
        LevelSetSpec::new(0.3, 1.0),
        Thresholds::new(vec![0.0]).unwrap(),
        0.0,
        vec![ClassSpec::field(1.0, 0.2, 1.0, 0.0), ClassSpec::field(1.0, 0.2, 1.0, 1.0)],
    )
    .unwrap();
    let analytic = 0.5 * 0.5f64.exp() + 0.5 * 1.5f64.exp();
    let closed = rho1(&model, None);
    let lattice = Lattice::new(Window::unit(), 8, 8, Margins::uniform(0.5)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut acc = Welford::default();
    let j = lattice.index(4, 4);
    let mut at_point = Welford::default();
    for _ in 0..100_000 {
        let lat = simulate_latent(&model, &lattice, None, SimOrders::default(), &mut rng).unwrap();
        let lam: Vec<f64> = lat.log_intensity.iter().map(|v| v.exp()).collect();
        acc.push(lam.iter().sum::<f64>() / lam.len() as f64);
        at_point.push(lam[j]);
    }
    let rel = (acc.mean() - closed).abs() / closed;
    let rel_point = (at_point.mean() - closed).abs() / closed;
    Outcome::check(
        (closed - analytic).abs() < 1e-9 && rel < 0.01 && rel_point < 0.01,
        format!(
            "rho1 {closed:.5} (analytic {analytic:.5}); MC mean {:.5} over cells, {:.5} at one cell; rel err {rel:.4}, {rel_point:.4} (< 0.01)",
            acc.mean(),
            at_point.mean()
        ),
    )
}

fn c3_p_lk() -> Outcome {
    let th = Thresholds::new(vec![-0.4, 0.6]).unwrap();
    let (mu1, mu2) = (0.2, -0.1);
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for &r in &[0.0f64, 0.3, 0.7, 0.99] {
        let mut counts = [[0usize; 3]; 3];
        let s = (1.0 - r * r).sqrt();
        for _ in 0..n {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            counts[th.classify(a + mu1)][th.classify(r * a + s * b + mu2)] += 1;
        }
        for l in 0..3 {
            for k in 0..3 {
                // first location in class k, second in class l
                let q = p_lk_corr(l, k, r, mu1, mu2, &th, 64).unwrap();
                worst = worst.max((q - counts[k][l] as f64 / n as f64).abs());
            }
        }
    }
    // limits: independence factorises, coincident points are diagonal
    let marg = |l: usize, mu: f64| {
        let (lo, hi) = th.bounds(l);
        let nd = Normal::new(mu, 1.0).unwrap();
        nd.cdf(hi) - nd.cdf(lo)
    };
    let mut lim = 0.0f64;
    for l in 0..3 {
        for k in 0..3 {
            let ind = p_lk_corr(l, k, 0.0, mu1, mu2, &th, 64).unwrap();
            lim = lim.max((ind - marg(k, mu1) * marg(l, mu2)).abs());
            let same = p_lk_corr(l, k, 1.0, mu1, mu1, &th, 64).unwrap();
            let want = if l == k { marg(l, mu1) } else { 0.0 };
            lim = lim.max((same - want).abs());
        }
    }
    Outcome::check(
        worst < 2e-3 && lim < 1e-10,
        format!("max |quadrature − MC| {worst:.2e} (< 2e-3); limit cases max error {lim:.1e}"),
    )
}

fn c4_empty_space() -> Outcome {
    let lambda = 50.0f64;
    let model = LscpModel::new(
        LevelSetSpec::new(0.3, 1.0),
        Thresholds::new(vec![]).unwrap(),
        0.0,
        vec![ClassSpec::constant(lambda.ln())],
    )
    .unwrap();
    let lattice = Lattice::new(Window::unit(), 20, 20, Margins::uniform(0.3)).unwrap();
    let radii = [0.05, 0.1, 0.2];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f = empty_space_mc((0.5, 0.5), &radii, &model, &lattice, None, 2000, &mut rng).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for (&r, &(est, se)) in radii.iter().zip(&f) {
        let want = 1.0 - (-lambda * std::f64::consts::PI * r * r).exp();
        // the Poisson limit has no sampling variability, so the tolerance floors at rounding
        ok &= (est - want).abs() <= 3.0 * se + 1e-9;
        parts.push(format!("r={r}: {est:.6} vs {want:.6} (se {se:.1e})"));
    }
    Outcome::check(ok, parts.join("; "))
}

/// Online per-component mean and batch-means standard errors.
struct BatchAcc {
    batch: usize,
    cur: Vec<(f64, f64)>,
    batches: Vec<Vec<(f64, f64)>>,
    filled: usize,
}

impl BatchAcc {
    fn new(dim: usize, batch: usize) -> Self {
        Self { batch, cur: vec![(0.0, 0.0); dim], batches: Vec::new(), filled: 0 }
    }

    fn push(&mut self, x: &[f64]) {
        for (c, v) in self.cur.iter_mut().zip(x) {
            c.0 += v;
            c.1 += v * v;
        }
        self.filled += 1;
        if self.filled == self.batch {
            let b = self.batch as f64;
            self.batches.push(self.cur.iter().map(|c| (c.0 / b, c.1 / b)).collect());
            self.cur.iter_mut().for_each(|c| *c = (0.0, 0.0));
            self.filled = 0;
        }
    }

    /// `(mean, se of mean, second moment, se of second moment)` per component.
    fn summary(&self) -> Vec<(f64, f64, f64, f64)> {
        let nb = self.batches.len() as f64;
        (0..self.cur.len())
            .map(|i| {
                let m1: Vec<f64> = self.batches.iter().map(|b| b[i].0).collect();
                let m2: Vec<f64> = self.batches.iter().map(|b| b[i].1).collect();
                let stat = |xs: &[f64]| {
                    let m = xs.iter().sum::<f64>() / nb;
                    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (nb - 1.0);
                    (m, (v / nb).sqrt())
                };
                let (a, sa) = stat(&m1);
                let (b, sb) = stat(&m2);
                (a, sa, b, sb)
            })
            .collect()
    }
}

/// Real degrees of freedom of Hermitian coefficients: `(index, is_imag, prior variance)`.
fn hermitian_dofs(grid: &SpectralGrid) -> Vec<(usize, bool, f64)> {
    let d = grid.dims();
    let mut out = Vec::new();
    for iy in 0..d.my {
        for ix in 0..d.mx {
            let m = iy * d.mx + ix;
            let c = ((d.my - iy) % d.my) * d.mx + (d.mx - ix) % d.mx;
            if c == m {
                out.push((m, false, 1.0));
            } else if m < c {
                out.push((m, false, 0.5));
                out.push((m, true, 0.5));
            }
        }
    }
    out
}

fn c5_prior_invariance() -> Outcome {
    let lattice = Lattice::new(Window::unit(), 16, 16, Margins::uniform(0.4)).unwrap();
    let grid = SpectralGrid::new(&lattice, FieldRole::LevelSet);
    let spec = MaternSpec::new(1.0, 0.3, 1.0).unwrap();
    let basis = lscp::grf::SpectralBasis::new(&grid, spec, grid.full_order());
    let dofs = hermitian_dofs(&grid);
    let zero = |w: &[Complex64]| PcnEval {
        phi: 0.0,
        grad: vec![Complex64::new(0.0, 0.0); w.len()],
        values: Vec::new(),
    };
    let delta = 0.5;
    // 3 SE at the family-wise level over all coefficients
    let z_crit = z_quantile(1.0 - 0.00135 / dofs.len() as f64);
    // Without a likelihood the curvature is zero and every scale is one, so
    // the plain step is the sampler. The curvature-scaled step is checked
    // too, against its own Monte-Carlo error since its reference measure
    // mixes slowly when no likelihood matches it.
    let scales = curvature_scales(basis.sqrt_weights(), 400.0);
    let pmin = scales.iter().cloned().fold(1.0, f64::min);
    let mut lines = Vec::new();
    let mut pass = true;
    for (v, sc) in [None, Some(scales.as_slice())].into_iter().enumerate() {
        let iters = if v == 0 { 50_000 } else { 200_000 };
        let mut rng = ChaCha8Rng::seed_from_u64(50 + v as u64);
        let mut white = grid.white_noise(&mut rng);
        let mut cur = zero(&white);
        let mut acc = BatchAcc::new(dofs.len(), iters / 40);
        let mut accepted = 0usize;
        let mut x = vec![0.0; dofs.len()];
        for _ in 0..iters {
            let (_, next) = pcn_step(&grid, &white, &cur, delta, sc, zero, &mut rng);
            if let Some((w, e)) = next {
                white = w;
                cur = e;
                accepted += 1;
            }
            for (xi, &(m, im, _)) in x.iter_mut().zip(&dofs) {
                *xi = if im { white[m].im } else { white[m].re };
            }
            acc.push(&x);
        }
        let (mut var_rel, mut var_z, mut mean_z) = (0.0f64, 0.0f64, 0.0f64);
        for (s, &(_, _, pv)) in acc.summary().iter().zip(&dofs) {
            let var = s.2 - s.0 * s.0;
            var_rel = var_rel.max((var / pv - 1.0).abs());
            var_z = var_z.max((s.2 - pv).abs() / s.3);
            mean_z = mean_z.max(s.0.abs() / s.1);
        }
        let rate = accepted as f64 / iters as f64;
        if v == 0 {
            pass &= var_rel < 0.05 && mean_z < z_crit;
            lines.push(format!(
                "plain step, {iters} iterations: acceptance {rate:.3}, max |var/prior − 1| {var_rel:.4} (< 0.05), max |mean|/SE {mean_z:.2} (< {z_crit:.2})"
            ));
        } else {
            pass &= var_z < z_crit && mean_z < z_crit;
            lines.push(format!(
                "scaled step (min scale {pmin:.2}), {iters} iterations: acceptance {rate:.3}, max |var/prior − 1| {var_rel:.3}, max z of second moment {var_z:.2} and mean {mean_z:.2} (< {z_crit:.2})"
            ));
        }
    }
    Outcome::check(pass, format!("{} real coefficients; {}", dofs.len(), lines.join("; ")))
}

fn c6_gamma_enumeration() -> Outcome {
    let l = Lattice::new(Window::unit(), 1, 1, Margins::uniform(2.0)).unwrap();
    let mut counts = CountGrid::zeros(&l);
    counts.counts[0] = 3;
    // threshold at the level-set mean gives equal prior mass
    let model = LscpModel::new(
        LevelSetSpec::new(1.5, 1.0),
        Thresholds::new(vec![0.0]).unwrap(),
        0.5,
        vec![ClassSpec::constant(3f64.ln()), ClassSpec::constant(0.0)],
    )
    .unwrap();
    let data = FitData::new(l, counts, None).unwrap();
    let state = ChainState::initial(&FitSpec::new(model), &data, FitOrders::default()).unwrap();
    let v = state.level_set.as_ref().unwrap().v(0);
    let want = 0.785;
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let hits = (0..n).filter(|_| gibbs_gamma(&state, &data, &mut rng).gamma[0] == 0).count();
    let got = hits as f64 / n as f64;
    let se = (want * (1.0 - want) / n as f64).sqrt();
    Outcome::check(
        v == 0.0 && (got - want).abs() < 3.0 * se,
        format!("P(class 1) {got:.4} vs {want} ± {:.4} (3 SE)", 3.0 * se),
    )
}

fn zero_inflated_truth() -> LscpModel {
    LscpModel::new(
        LevelSetSpec::new(12.0, 1.0),
        Thresholds::new(vec![0.3]).unwrap(),
        0.1,
        vec![ClassSpec::field(0.8, 6.0, 1.0, 1.0), ClassSpec::constant(-3.0)],
    )
    .unwrap()
}

fn zero_inflated_start() -> LscpModel {
    LscpModel::new(
        LevelSetSpec::new(8.0, 1.0),
        Thresholds::new(vec![0.0]).unwrap(),
        0.3,
        vec![ClassSpec::field(1.0, 4.0, 1.0, 0.0), ClassSpec::constant(-3.0)],
    )
    .unwrap()
}

fn window_30x60() -> Window {
    Window::new(0.0, 0.0, 30.0, 60.0).unwrap()
}

fn margins_30x60() -> Margins {
    Margins { level_set: 25.0, class: 15.0 }
}

fn recovery_chain(seed: u64, n_iter: usize) -> ChainConfig {
    ChainConfig { n_iter, thin: 5, seed, field_steps: 2, interweave_steps: 2, ..Default::default() }
}

fn c7_recovery() -> Outcome {
    let lattice = Lattice::new(window_30x60(), 30, 60, margins_30x60()).unwrap();
    let truth = zero_inflated_truth();
    let checked = [("sigma1", 0.8), ("rho1", 6.0), ("c1", 0.3), ("beta1_Intercept", 1.0)];
    let reported = [("nugget", 0.1), ("rho0", 12.0)];
    let reps = 20;
    let mut cover: HashMap<&str, usize> = HashMap::new();
    let mut accuracy = Welford::default();
    for rep in 0..reps as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
        let lat = simulate_latent(&truth, &lattice, None, SimOrders::default(), &mut rng).unwrap();
        let counts = draw_counts(&lat.log_intensity, &lattice, &mut rng).unwrap();
        let data = FitData::new(lattice.clone(), counts, None).unwrap();
        let out = run_chain(&FitSpec::new(zero_inflated_start()), &data, &recovery_chain(rep + 1, 16_000)).unwrap();
        let s = posterior_summaries(&out.store, 0.95).unwrap();
        for &(name, v) in checked.iter().chain(&reported) {
            let p = s.params.iter().find(|p| p.name == name).unwrap();
            *cover.entry(name).or_default() += (p.lower <= v && v <= p.upper) as usize;
        }
        let a = out
            .store
            .gamma
            .iter()
            .map(|g| g.iter().zip(&lat.gamma.gamma).filter(|(a, b)| a == b).count() as f64 / g.len() as f64)
            .sum::<f64>()
            / out.store.len() as f64;
        accuracy.push(a);
        eprintln!("  C7 replicate {}/{reps}: accuracy {a:.3}", rep + 1);
    }
    let pass = checked.iter().all(|(n, _)| cover[n] >= 17) && accuracy.mean() > 0.85;
    let fmt = |set: &[(&str, f64)]| set.iter().map(|(n, _)| format!("{n} {}/{reps}", cover[n])).collect::<Vec<_>>().join(", ");
    Outcome::check(
        pass,
        format!(
            "coverage {} (>= 17 each); mean accuracy {:.3} (> 0.85); not criteria: {}",
            fmt(&checked),
            accuracy.mean(),
            fmt(&reported)
        ),
    )
}

fn c8_envelope_calibration() -> Outcome {
    let lattice = Lattice::new(window_30x60(), 30, 60, margins_30x60()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let real = simulate_realization(&zero_inflated_truth(), &lattice, None, &mut rng).unwrap();
    let data = FitData::new(lattice.clone(), real.counts, None).unwrap();
    let out = run_chain(&FitSpec::new(zero_inflated_start()), &data, &recovery_chain(8, 8000)).unwrap();
    let store = &out.store;
    let r: Vec<f64> = linear_grid(7.5, 31).into_iter().skip(1).collect();
    let reps = 20;
    let mut cov = Welford::default();
    for rep in 0..reps {
        let observed = simulate_pattern(EnvelopeSource::Posterior(store), &lattice, 8_000, rep, reps).unwrap();
        let e = envelope(EnvelopeSource::Posterior(store), &lattice, &observed, Statistic::L, &r, 99, 0.9, 100 + rep as u64)
            .unwrap();
        cov.push(e.coverage());
    }
    Outcome::check(
        cov.mean() >= 0.85,
        format!("mean fraction of radii inside the 90% envelope {:.3} over {reps} patterns (>= 0.85)", cov.mean()),
    )
}

fn c9_refinement() -> Outcome {
    let truth = zero_inflated_truth();
    let fine = Lattice::new(window_30x60(), 60, 120, margins_30x60()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pattern = simulate_realization(&truth, &fine, None, &mut rng).unwrap().pattern;
    let cfg = RefineConfig {
        sizes: vec![(15, 30), (30, 60), (60, 120)],
        orders: vec![OrderLevel::Half, OrderLevel::Full],
        margins: margins_30x60(),
        chain: recovery_chain(9, 16_000),
        probes: vec![(7.5, 15.0), (15.0, 30.0), (22.5, 45.0)],
    };
    let report = refine_study(&FitSpec::new(zero_inflated_start()), &pattern, &cfg).unwrap();
    let f = report.fraction_shrinking.unwrap();
    let failing: Vec<String> = report
        .trends
        .iter()
        .filter(|t| !t.shrinking)
        .map(|t| format!("{}/{} {:.3}->{:.3}", t.functional, t.order.label(), t.abs_deltas[0], t.abs_deltas[1]))
        .collect();
    Outcome::check(
        f >= 0.8,
        format!(
            "{:.0}% of {} probe trends shrink (>= 80%); not shrinking: [{}]",
            100.0 * f,
            report.trends.len(),
            failing.join(", ")
        ),
    )
}

const BCI_SOIL: [&str; 13] = ["Al", "B", "Ca", "Cu", "Fe", "K", "Mg", "Mn", "N", "Nmin", "P", "Zn", "pH"];

/// Expects `pattern.csv`, `elevation.txt` and one `<name>.txt` raster per
/// soil constituent in `dir`, in the headed raster format.
fn c10_bci(dir: &Path) -> Outcome {
    let window = Window::new(0.0, 0.0, 1000.0, 500.0).unwrap();
    let lattice = Lattice::new(window, 60, 30, Margins { level_set: 350.0, class: 220.0 }).unwrap();
    let run = || -> lscp::Result<(BTreeSet<String>, BTreeSet<String>)> {
        let elev = load_raster(&dir.join("elevation.txt"))?;
        let mut names = vec!["Elev".to_string(), "Slope".to_string()];
        let mut cols = vec![bicubic_to_lattice(&elev, &lattice)?, bicubic_to_lattice(&sobel_slope(&elev)?, &lattice)?];
        for s in BCI_SOIL {
            names.push(s.to_string());
            cols.push(bicubic_to_lattice(&load_raster(&dir.join(format!("{s}.txt")))?, &lattice)?);
        }
        let (z, _) = standardize(&CovariateStack::new(names, cols)?)?;
        let (kept, trace) = vif_prune(&z, 5.0)?;
        let removed: BTreeSet<String> = trace.iter().map(|s| s.removed.clone()).collect();
        let pattern: PointPattern = load_pattern(&dir.join("pattern.csv"), window)?;
        let counts = bin_points(&pattern, &lattice);
        let design = Design::with_covariates(kept.names.clone(), kept.columns.clone())?;
        let mean = MeanStructure::Linear(vec![0.0; kept.names.len() + 1]);
        let model = LscpModel::new(
            LevelSetSpec::new(100.0, 1.0),
            Thresholds::new(vec![])?,
            0.0,
            vec![ClassSpec::Regression { mean }],
        )?;
        let data = FitData::new(lattice.clone(), counts, Some(design))?;
        let out = run_chain(&FitSpec::new(model), &data, &ChainConfig { n_iter: 20_000, seed: 10, ..Default::default() })?;
        let betas: Vec<String> = out.store.param_names().into_iter().filter(|n| n.starts_with("beta")).collect();
        let samples: Vec<Vec<f64>> = betas.iter().map(|n| out.store.trace(n).unwrap()).collect();
        let sig = holm_bonferroni(&betas, &samples, 0.05)?;
        let significant = sig
            .iter()
            .filter(|s| s.significant)
            .map(|s| s.name.trim_start_matches("beta1_").to_string())
            .collect();
        Ok((removed, significant))
    };
    match run() {
        Ok((removed, significant)) => {
            let expected: BTreeSet<String> = ["B", "Ca", "K", "Zn"].map(String::from).into();
            let overlap = removed.intersection(&expected).count();
            let needed = ["Intercept", "Elev", "Slope", "Mn"];
            let has_all = needed.iter().all(|n| significant.contains(*n));
            Outcome::check(
                removed.len() == 4 && overlap >= 3 && has_all,
                format!("removed {removed:?} (overlap {overlap}/4, need >= 3); significant {significant:?}"),
            )
        }
        Err(e) => Outcome::check(false, format!("pipeline failed: {e}")),
    }
}

fn c10_optional() -> Outcome {
    match std::env::var_os("LSCP_BCI_DIR").map(PathBuf::from) {
        Some(d) if d.join("pattern.csv").exists() => c10_bci(&d),
        _ => Outcome {
            verdict: Verdict::Skip,
            detail: "LSCP_BCI_DIR not set or without pattern.csv; the public data are not bundled".into(),
        },
    }
}

// ---------------------------------------------------------------------------

type Criterion = (&'static str, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 10] = [
    ("C1", "FFT and Cholesky samplers agree", c1_fft_vs_cholesky),
    ("C2", "first product density matches simulation", c2_first_moment),
    ("C3", "bivariate class probabilities match simulation", c3_p_lk),
    ("C4", "empty-space function has the Poisson limit", c4_empty_space),
    ("C5", "pCN-MALA leaves the prior invariant", c5_prior_invariance),
    ("C6", "Gibbs class draw matches enumeration", c6_gamma_enumeration),
    ("C7", "parameters are recovered on the zero-inflated model", c7_recovery),
    ("C8", "L envelope is self-consistent", c8_envelope_calibration),
    ("C9", "probe functionals settle under refinement", c9_refinement),
    ("C10", "covariate pruning and significance on the rainforest data", c10_optional),
];

fn main() {
    let only: Option<Vec<String>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').map(|t| t.trim().to_string()).collect());
    let mut failed = 0;
    for (id, name, f) in CRITERIA {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let tag = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
            Verdict::Skip => "SKIP",
        };
        println!("{tag} {id} {name}: {} [{:.1}s]", o.detail, t.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
