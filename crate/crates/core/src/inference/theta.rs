//! Hyperparameter blocks: log targets conditioned on the whitened fields and
//! the classification, and a preconditioned MALA update.

use rand::Rng;
use rand_distr::StandardNormal;

use super::likelihood::{poisson_term, probit_term};
use super::priors::PriorConfig;
use super::state::{ClassState, FitData, LevelSetState};
use crate::grf::{MaternSpec, SpectralBasis};
use crate::model::ClassificationField;

/// Derived quantities of a block evaluated at a proposed parameter vector,
/// kept so an accepted proposal need not be recomputed.
#[derive(Debug, Clone)]
pub enum ThetaCache {
    Field {
        basis: SpectralBasis,
        values: Vec<f64>,
        beta: Vec<f64>,
        mean: Vec<f64>,
    },
    Regression {
        beta: Vec<f64>,
        mean: Vec<f64>,
    },
    LevelSet {
        basis: SpectralBasis,
        values: Vec<f64>,
        thresholds: Vec<f64>,
        nugget: f64,
        beta: Vec<f64>,
        mean: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct ThetaEval {
    pub logp: f64,
    pub grad: Vec<f64>,
    pub cache: ThetaCache,
}

/// Conditional log target of class `k`'s parameters in unconstrained
/// coordinates; `None` outside the prior support.
pub fn class_target(
    class: &ClassState,
    k: usize,
    gamma: &ClassificationField,
    data: &FitData,
    priors: &PriorConfig,
    u: &[f64],
) -> Option<ThetaEval> {
    let area = data.cell_area();
    let design = &data.design;
    let y = &data.counts.counts;
    match class {
        ClassState::Field { field, bounds, .. } => {
            let sigma = u[0].exp();
            let range = u[1].exp();
            if !(sigma.is_finite() && sigma > 0.0 && bounds.contains(range)) {
                return None;
            }
            let beta = u[2..].to_vec();
            let spec = MaternSpec {
                sigma,
                range,
                nu: field.spec().nu,
            };
            let basis = SpectralBasis::new(&field.grid, spec, field.basis.order());
            let values = basis.synthesize(&field.grid, &field.white);
            let tangent = basis.range_tangent(&field.grid, &field.white);
            let mean = design.mul(&beta);
            let mut logp = 0.0;
            let mut g_sigma = 0.0;
            let mut g_range = 0.0;
            let mut resid = vec![0.0; values.len()];
            for (j, &g) in gamma.gamma.iter().enumerate() {
                if g as usize != k {
                    continue;
                }
                let (ll, d) = poisson_term(y[j], area, values[j] + mean[j]);
                logp += ll;
                g_sigma += d * values[j];
                g_range += d * tangent[j];
                resid[j] = d;
            }
            let (ps, dps) = priors.log_sigma(sigma);
            let (pr, dpr) = priors.log_range(range);
            logp += ps + pr;
            let mut grad = vec![g_sigma + dps, g_range + dpr];
            for (gb, b) in design.tmul(&resid, beta.len()).into_iter().zip(&beta) {
                let (pb, dpb) = priors.beta(*b);
                logp += pb;
                grad.push(gb + dpb);
            }
            if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return None;
            }
            Some(ThetaEval {
                logp,
                grad,
                cache: ThetaCache::Field {
                    basis,
                    values,
                    beta,
                    mean,
                },
            })
        }
        ClassState::Regression { .. } => {
            let beta = u.to_vec();
            let mean = design.mul(&beta);
            let mut logp = 0.0;
            let mut resid = vec![0.0; mean.len()];
            for (j, &g) in gamma.gamma.iter().enumerate() {
                if g as usize != k {
                    continue;
                }
                let (ll, d) = poisson_term(y[j], area, mean[j]);
                logp += ll;
                resid[j] = d;
            }
            let mut grad = Vec::with_capacity(beta.len());
            for (gb, b) in design.tmul(&resid, beta.len()).into_iter().zip(&beta) {
                let (pb, dpb) = priors.beta(*b);
                logp += pb;
                grad.push(gb + dpb);
            }
            if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return None;
            }
            Some(ThetaEval {
                logp,
                grad,
                cache: ThetaCache::Regression { beta, mean },
            })
        }
        ClassState::Constant { .. } => None,
    }
}

/// Conditional log target of the level-set block `[c, log σ_ε, log ρ_0, β_0]`.
pub fn level_set_target(
    ls: &LevelSetState,
    gamma: &ClassificationField,
    data: &FitData,
    priors: &PriorConfig,
    u: &[f64],
) -> Option<ThetaEval> {
    let nk = ls.thresholds.len();
    let thresholds = u[..nk].to_vec();
    if thresholds.windows(2).any(|w| w[0] >= w[1]) || thresholds.iter().any(|c| !c.is_finite()) {
        return None;
    }
    let nugget = u[nk].exp();
    let range = u[nk + 1].exp();
    if !(nugget > 0.0 && nugget <= priors.nugget_upper && ls.bounds.contains(range)) {
        return None;
    }
    let spec = MaternSpec {
        sigma: 1.0,
        range,
        nu: ls.field.spec().nu,
    };
    let basis = SpectralBasis::new(&ls.field.grid, spec, ls.field.basis.order());
    let values = basis.synthesize(&ls.field.grid, &ls.field.white);
    let tangent = basis.range_tangent(&ls.field.grid, &ls.field.white);
    let (beta, mean) = if ls.mean_estimated {
        let b = u[nk + 2..].to_vec();
        let m = data.design.mul(&b);
        (b, m)
    } else {
        (ls.beta.clone(), ls.mean.clone())
    };
    let mut logp = 0.0;
    let mut g_c = vec![0.0; nk];
    let mut g_nug = 0.0;
    let mut g_range = 0.0;
    let mut d_v = vec![0.0; values.len()];
    for (j, &g) in gamma.gamma.iter().enumerate() {
        let k = g as usize;
        let t = probit_term(k, values[j] + mean[j], &thresholds, nugget);
        logp += t.logp;
        if k > 0 {
            g_c[k - 1] += t.d_lo;
        }
        if k < nk {
            g_c[k] += t.d_hi;
        }
        g_nug += t.d_sigma * nugget;
        g_range += t.d_v * tangent[j];
        d_v[j] = t.d_v;
    }
    let mut grad = Vec::with_capacity(u.len());
    for (c, gc) in thresholds.iter().zip(g_c) {
        let (p, d) = priors.threshold(*c);
        logp += p;
        grad.push(gc + d);
    }
    let (pn, dpn) = priors.log_nugget(nugget);
    let (pr, dpr) = priors.log_range(range);
    logp += pn + pr;
    grad.push(g_nug + dpn);
    grad.push(g_range + dpr);
    if ls.mean_estimated {
        for (gb, b) in data.design.tmul(&d_v, beta.len()).into_iter().zip(&beta) {
            let (pb, dpb) = priors.beta(*b);
            logp += pb;
            grad.push(gb + dpb);
        }
    }
    if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return None;
    }
    Some(ThetaEval {
        logp,
        grad,
        cache: ThetaCache::LevelSet {
            basis,
            values,
            thresholds,
            nugget,
            beta,
            mean,
        },
    })
}

/// Adaptive state of a preconditioned MALA sampler over the free
/// coordinates of a block.
#[derive(Debug, Clone)]
pub struct ThetaSampler {
    /// Indices of the free coordinates within the block vector.
    pub free: Vec<usize>,
    /// Diagonal preconditioner over the free coordinates.
    pub precond: Vec<f64>,
    pub step: f64,
    window: Vec<crate::stats::Welford>,
    next_checkpoint: usize,
}

impl ThetaSampler {
    pub fn new(free: Vec<usize>) -> Self {
        let d = free.len();
        Self {
            free,
            precond: vec![0.01; d],
            step: 1.0,
            window: vec![crate::stats::Welford::default(); d],
            next_checkpoint: 100,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    /// One MALA step. `target` evaluates a full block vector. Returns the
    /// acceptance probability and the accepted evaluation, if any.
    pub fn step<R, F>(&self, u: &[f64], cur: &ThetaEval, target: F, rng: &mut R) -> (f64, Option<(Vec<f64>, ThetaEval)>)
    where
        R: Rng + ?Sized,
        F: Fn(&[f64]) -> Option<ThetaEval>,
    {
        if self.step == 0.0 {
            return (1.0, Some((u.to_vec(), cur.clone())));
        }
        let h2 = self.step * self.step;
        let mut prop = u.to_vec();
        for (i, &c) in self.free.iter().enumerate() {
            let m = self.precond[i];
            let xi: f64 = rng.sample(StandardNormal);
            prop[c] = u[c] + 0.5 * h2 * m * cur.grad[c] + self.step * m.sqrt() * xi;
        }
        let Some(next) = target(&prop) else {
            return (0.0, None);
        };
        let log_q = |from: &[f64], to: &[f64], g: &[f64]| -> f64 {
            self.free
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let m = self.precond[i];
                    let r = to[c] - from[c] - 0.5 * h2 * m * g[c];
                    -r * r / (2.0 * h2 * m)
                })
                .sum()
        };
        let log_a = next.logp - cur.logp + log_q(&prop, u, &next.grad) - log_q(u, &prop, &cur.grad);
        let alpha = if log_a.is_nan() { 0.0 } else { log_a.min(0.0).exp() };
        let accepted = rng.random::<f64>() < alpha;
        (alpha, accepted.then_some((prop, next)))
    }

    /// Burn-in adaptation after iteration `t` (zero-based) with acceptance
    /// probability `alpha` and current block vector `u`.
    pub fn adapt(&mut self, t: usize, alpha: f64, u: &[f64], target_accept: f64) {
        let gamma = (t as f64 + 1.0).powf(-0.6);
        self.step = (self.step.ln() + gamma * (alpha - target_accept)).exp().clamp(1e-4, 10.0);
        for (w, &c) in self.window.iter_mut().zip(&self.free) {
            w.push(u[c]);
        }
        if t + 1 == self.next_checkpoint {
            for (m, w) in self.precond.iter_mut().zip(&mut self.window) {
                let v = w.variance();
                if v.is_finite() && v > 0.0 {
                    *m = v.clamp(1e-4, 1e2);
                }
                *w = crate::stats::Welford::default();
            }
            self.next_checkpoint *= 2;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Window;
    use crate::inference::state::{ChainState, FitOrders, FitSpec};
    use crate::lattice::{CountGrid, Lattice, Margins};
    use crate::model::{ClassSpec, LevelSetSpec, LscpModel, Thresholds};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ChainState, FitData, FitSpec) {
        let lattice = Lattice::new(Window::new(0.0, 0.0, 12.0, 8.0).unwrap(), 12, 8, Margins::uniform(6.0)).unwrap();
        let model = LscpModel::new(
            LevelSetSpec::new(3.0, 1.0),
            Thresholds::new(vec![0.2]).unwrap(),
            0.3,
            vec![ClassSpec::field(0.8, 2.5, 1.0, 0.4), ClassSpec::constant(-1.0)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = CountGrid::zeros(&lattice);
        for c in counts.counts.iter_mut() {
            *c = rng.random_range(0..4);
        }
        let data = FitData::new(lattice, counts, None).unwrap();
        let spec = FitSpec::new(model);
        let mut state = ChainState::initial(&spec, &data, FitOrders::default()).unwrap();
        for c in state.classes.iter_mut() {
            if let ClassState::Field { field, .. } = c {
                field.white = field.grid.white_noise(&mut rng);
            }
        }
        if let Some(ls) = state.level_set.as_mut() {
            ls.field.white = ls.field.grid.white_noise(&mut rng);
        }
        for (j, g) in state.gamma.gamma.iter_mut().enumerate() {
            *g = (j % 3 == 0) as u8;
        }
        (state, data, spec)
    }

    fn check_grad(f: impl Fn(&[f64]) -> Option<ThetaEval>, u: &[f64]) {
        let e = f(u).unwrap();
        let h = 1e-5;
        for i in 0..u.len() {
            let mut up = u.to_vec();
            up[i] += h;
            let mut dn = u.to_vec();
            dn[i] -= h;
            let fd = (f(&up).unwrap().logp - f(&dn).unwrap().logp) / (2.0 * h);
            assert!(
                (fd - e.grad[i]).abs() < 1e-4 * (1.0 + fd.abs()),
                "coordinate {i}: fd {fd} vs {}",
                e.grad[i]
            );
        }
    }

    #[test]
    fn class_gradient_matches_finite_differences() {
        let (state, data, spec) = setup();
        let c = &state.classes[0];
        let u = vec![0.8f64.ln(), 2.5f64.ln(), 0.4];
        check_grad(|u| class_target(c, 0, &state.gamma, &data, &spec.priors, u), &u);
    }

    #[test]
    fn level_set_gradient_matches_finite_differences() {
        let (mut state, data, spec) = setup();
        let ls = state.level_set.as_mut().unwrap();
        ls.mean_estimated = true;
        let u = vec![0.2, 0.3f64.ln(), 3.0f64.ln(), 0.1];
        check_grad(|u| level_set_target(ls, &state.gamma, &data, &spec.priors, u), &u);
    }

    #[test]
    fn out_of_support_is_rejected() {
        let (state, data, spec) = setup();
        let ls = state.level_set.as_ref().unwrap();
        // Range above the extension margin.
        assert!(level_set_target(ls, &state.gamma, &data, &spec.priors, &[0.2, -1.0, 10.0f64.ln()]).is_none());
        // Nugget above its bound.
        assert!(level_set_target(ls, &state.gamma, &data, &spec.priors, &[0.2, 2.0f64.ln(), 1.0]).is_none());
    }

    #[test]
    fn zero_step_proposes_the_current_state() {
        let (state, data, spec) = setup();
        let c = &state.classes[0];
        let f = |u: &[f64]| class_target(c, 0, &state.gamma, &data, &spec.priors, u);
        let u = vec![0.8f64.ln(), 2.5f64.ln(), 0.4];
        let cur = f(&u).unwrap();
        let mut s = ThetaSampler::new(vec![0, 1, 2]);
        s.step = 0.0;
        let (a, next) = s.step(&u, &cur, f, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, 1.0);
        assert_eq!(next.unwrap().0, u);
    }

    #[test]
    fn range_below_lattice_spacing_is_rejected() {
        let (state, data, spec) = setup();
        let c = &state.classes[0];
        assert!(class_target(c, 0, &state.gamma, &data, &spec.priors, &[0.0, 0.5f64.ln(), 0.0]).is_none());
    }

    #[test]
    fn mala_targets_a_gaussian() {
        // Standard bivariate normal with variances (1, 4).
        let f = |u: &[f64]| -> Option<ThetaEval> {
            Some(ThetaEval {
                logp: -0.5 * (u[0] * u[0] + u[1] * u[1] / 4.0),
                grad: vec![-u[0], -u[1] / 4.0],
                cache: ThetaCache::Regression {
                    beta: vec![],
                    mean: vec![],
                },
            })
        };
        let mut s = ThetaSampler::new(vec![0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut u = vec![3.0, -3.0];
        let mut cur = f(&u).unwrap();
        let mut w = [crate::stats::Welford::default(), crate::stats::Welford::default()];
        let mut acc = 0.0;
        let n = 40_000;
        for t in 0..n {
            let (a, next) = s.step(&u, &cur, f, &mut rng);
            if let Some((v, e)) = next {
                u = v;
                cur = e;
            }
            if t < 4000 {
                s.adapt(t, a, &u, 0.574);
            } else {
                acc += a;
                w[0].push(u[0]);
                w[1].push(u[1]);
            }
        }
        let rate = acc / (n - 4000) as f64;
        assert!((rate - 0.574).abs() < 0.1, "acceptance {rate}");
        assert!(w[0].mean().abs() < 0.1);
        assert!((w[0].variance() - 1.0).abs() < 0.15);
        assert!((w[1].variance() - 4.0).abs() < 0.6);
    }
}
