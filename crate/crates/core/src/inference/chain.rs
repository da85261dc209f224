//! Metropolis-within-Gibbs driver: Γ by exact Gibbs, then for every block
//! a MALA update of its parameters and pCN-MALA updates of its field.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::gamma::{class_log_likelihoods, gibbs_gamma, marginal_log_likelihood};
use super::interweave::{range_move, shift_prior_delta, sigma_move, RwScale};
use super::likelihood::probit_term;
use super::pcn::{adapt_delta, class_potential, curvature_scales, level_set_potential, pcn_step};
use super::state::{
    class_names, class_unconstrained, level_set_names, level_set_unconstrained, Block, ChainState, ClassState,
    FitData, FitOrders, FitSpec, LevelSetState,
};
use super::store::{BlockLayout, SampleStore};
use super::theta::{class_target, level_set_target, ThetaCache, ThetaEval, ThetaSampler};
use crate::error::{Error, Result};
use crate::grf::Order;
use crate::model::ClassificationField;
use crate::stats::effective_sample_size;

/// Chain settings. Burn-in defaults to 20% of the iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seed: u64,
    /// pCN-MALA sub-steps per field per iteration.
    pub field_steps: usize,
    pub target_accept: f64,
    /// Initial pCN step `δ`.
    pub pcn_delta: f64,
    /// Initial MALA step scale.
    pub theta_step: f64,
    /// Adapt step sizes during burn-in; frozen afterwards.
    pub adapt: bool,
    /// Update blocks concurrently.
    pub parallel: bool,
    /// Scale pCN steps by a curvature-based Gaussian approximation.
    pub precondition: bool,
    /// Centred hyperparameter moves per iteration and block.
    pub interweave_steps: usize,
    pub level_set_order: Option<Order>,
    pub class_order: Option<Order>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            n_iter: 5000,
            burn_in: None,
            thin: 10,
            seed: 1,
            field_steps: 1,
            target_accept: 0.574,
            pcn_delta: 0.01,
            theta_step: 1.0,
            adapt: true,
            parallel: true,
            precondition: true,
            interweave_steps: 2,
            level_set_order: None,
            class_order: None,
        }
    }
}

impl ChainConfig {
    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.n_iter / 5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_iter == 0 || self.thin == 0 || self.field_steps == 0 {
            return Err(Error::Config("n_iter, thin and field_steps must be positive".into()));
        }
        if self.burn_in() >= self.n_iter {
            return Err(Error::Config(format!(
                "burn-in {} leaves no samples out of {} iterations",
                self.burn_in(),
                self.n_iter
            )));
        }
        if !(self.pcn_delta > 0.0 && self.pcn_delta <= 2.0) {
            return Err(Error::Config(format!("pcn_delta must lie in (0, 2], got {}", self.pcn_delta)));
        }
        if !(self.theta_step >= 0.0 && self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("theta_step must be non-negative and target_accept in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Counter {
    proposed: usize,
    accepted: usize,
}

impl Counter {
    fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as usize;
    }

    fn rate(&self) -> Option<f64> {
        (self.proposed > 0).then(|| self.accepted as f64 / self.proposed as f64)
    }
}

#[derive(Debug, Clone)]
struct BlockSampler {
    block: Block,
    rng: ChaCha8Rng,
    theta: ThetaSampler,
    delta: f64,
    has_field: bool,
    theta_acc: Counter,
    field_acc: Counter,
    rejected_nonfinite: usize,
    /// Which block parameters are free, in block order.
    free: Vec<bool>,
    /// Summed likelihood curvature, adapted during burn-in.
    curvature: Option<f64>,
    /// Random-walk scales of the centred moves: scale, range, level shift.
    moves: [RwScale; 3],
}

/// Per-block acceptance and final step sizes; rates are over the
/// post-burn-in iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostics {
    pub block: String,
    pub theta_acceptance: Option<f64>,
    pub field_acceptance: Option<f64>,
    pub theta_step: Option<f64>,
    pub pcn_delta: Option<f64>,
    pub rejected_nonfinite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub blocks: Vec<BlockDiagnostics>,
    pub ess: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

pub struct ChainOutput {
    pub store: SampleStore,
    pub diagnostics: Diagnostics,
    pub state: ChainState,
}

/// A running chain.
pub struct Chain<'a> {
    spec: &'a FitSpec,
    data: &'a FitData,
    cfg: ChainConfig,
    pub state: ChainState,
    ls_sampler: Option<BlockSampler>,
    class_samplers: Vec<Option<BlockSampler>>,
    gamma_rng: ChaCha8Rng,
    iteration: usize,
    /// Random-walk scales of the Γ-marginal nugget and threshold moves.
    marginal_moves: [RwScale; 2],
    marginal_acc: Counter,
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

impl<'a> Chain<'a> {
    pub fn new(spec: &'a FitSpec, data: &'a FitData, cfg: ChainConfig) -> Result<Self> {
        cfg.validate()?;
        let orders = FitOrders {
            level_set: cfg.level_set_order,
            class: cfg.class_order,
        };
        let state = ChainState::initial(spec, data, orders)?;
        let design = &data.design;
        let free_of = |names: Vec<String>| -> Vec<usize> {
            names
                .iter()
                .enumerate()
                .filter(|(_, n)| !spec.fixed.contains(n))
                .map(|(i, _)| i)
                .collect()
        };
        let make = |block: Block, names: Vec<String>, has_field: bool| {
            let stream = match block {
                Block::LevelSet => 1,
                Block::Class(k) => 2 + k as u64,
            };
            let free_idx = free_of(names.clone());
            let free = (0..names.len()).map(|i| free_idx.contains(&i)).collect();
            let mut theta = ThetaSampler::new(free_idx);
            theta.step = cfg.theta_step;
            BlockSampler {
                block,
                rng: block_rng(cfg.seed, stream),
                theta,
                delta: cfg.pcn_delta,
                has_field,
                theta_acc: Counter::default(),
                field_acc: Counter::default(),
                rejected_nonfinite: 0,
                free,
                curvature: None,
                moves: [RwScale::default(); 3],
            }
        };
        let ls_sampler = state
            .level_set
            .as_ref()
            .map(|ls| make(Block::LevelSet, level_set_names(ls, design), true));
        let class_samplers = state
            .classes
            .iter()
            .enumerate()
            .map(|(k, c)| match c {
                ClassState::Constant { .. } => None,
                ClassState::Field { .. } => Some(make(Block::Class(k), class_names(c, k, design), true)),
                ClassState::Regression { .. } => Some(make(Block::Class(k), class_names(c, k, design), false)),
            })
            .collect();
        Ok(Self {
            spec,
            data,
            state,
            ls_sampler,
            class_samplers,
            gamma_rng: block_rng(cfg.seed, 0),
            iteration: 0,
            marginal_moves: [RwScale::default(); 2],
            marginal_acc: Counter::default(),
            cfg,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn adapting(&self) -> bool {
        self.cfg.adapt && self.iteration < self.cfg.burn_in()
    }

    /// One full sweep.
    pub fn step(&mut self) {
        let t = self.iteration;
        let adapting = self.adapting();
        let counting = self.iteration >= self.cfg.burn_in();
        if self.state.n_classes() > 1 {
            self.marginal_level_set_moves(adapting, counting);
            self.state.gamma = gibbs_gamma(&self.state, self.data, &mut self.gamma_rng);
        }
        let ChainState {
            level_set,
            classes,
            gamma,
        } = &mut self.state;
        let gamma: &ClassificationField = gamma;
        let (spec, data, cfg) = (self.spec, self.data, &self.cfg);
        let ls_sampler = &mut self.ls_sampler;
        let class_samplers = &mut self.class_samplers;
        let ctx = Ctx {
            gamma,
            data,
            spec,
            cfg,
            t,
            adapting,
            counting,
        };
        let mut ls_job = || {
            if let (Some(ls), Some(s)) = (level_set.as_mut(), ls_sampler.as_mut()) {
                update_level_set(ls, s, &ctx);
            }
        };
        let class_job = |(k, (c, s)): (usize, (&mut ClassState, &mut Option<BlockSampler>))| {
            if let Some(s) = s.as_mut() {
                update_class(c, k, s, &ctx);
            }
        };
        if cfg.parallel {
            use rayon::prelude::*;
            rayon::join(ls_job, || {
                classes
                    .par_iter_mut()
                    .zip(class_samplers.par_iter_mut())
                    .enumerate()
                    .for_each(class_job)
            });
        } else {
            ls_job();
            classes.iter_mut().zip(class_samplers.iter_mut()).enumerate().for_each(class_job);
        }
        self.iteration += 1;
    }

    /// Random-walk moves on the nugget and thresholds with `Γ` summed out.
    /// `Γ` is redrawn straight afterwards, which keeps the joint target.
    fn marginal_level_set_moves(&mut self, adapting: bool, counting: bool) {
        let (Some(ls), Some(s)) = (self.state.level_set.as_ref(), self.ls_sampler.as_ref()) else {
            return;
        };
        let nk = ls.thresholds.len();
        let nugget_free = s.free[nk];
        let thresholds_free = s.free[..nk].iter().all(|&f| f);
        if !nugget_free && !thresholds_free {
            return;
        }
        let priors = &self.spec.priors;
        let n = self.data.lattice.len();
        let ll = class_log_likelihoods(&self.state, self.data);
        let ls = self.state.level_set.as_mut().expect("level set present");
        let v: Vec<f64> = (0..n).map(|j| ls.v(j)).collect();
        let target = |th: &[f64], sigma: f64| -> f64 {
            if th.windows(2).any(|w| w[0] >= w[1]) || !(sigma > 0.0 && sigma <= priors.nugget_upper) {
                return f64::NEG_INFINITY;
            }
            let prior: f64 = th.iter().map(|c| priors.threshold(*c).0).sum::<f64>() + priors.log_nugget(sigma).0;
            prior + marginal_log_likelihood(|j| v[j], th, sigma, &ll, n)
        };
        let mut cur = target(&ls.thresholds, ls.nugget);
        let t = self.iteration;
        for _ in 0..self.cfg.interweave_steps.max(1) {
            for (i, free) in [(0, nugget_free), (1, thresholds_free)] {
                if !free {
                    continue;
                }
                let (th, sigma) = if i == 0 {
                    let e = self.marginal_moves[0].draw(&mut self.gamma_rng);
                    (ls.thresholds.clone(), ls.nugget * e.exp())
                } else {
                    let th: Vec<f64> = ls
                        .thresholds
                        .iter()
                        .map(|c| c + self.marginal_moves[1].draw(&mut self.gamma_rng))
                        .collect();
                    (th, ls.nugget)
                };
                let next = target(&th, sigma);
                let (alpha, ok) = shift_accept(next - cur, &mut self.gamma_rng);
                if ok {
                    ls.thresholds = th;
                    ls.nugget = sigma;
                    cur = next;
                }
                if counting {
                    self.marginal_acc.record(ok);
                }
                if adapting {
                    self.marginal_moves[i].adapt(t, alpha);
                }
            }
        }
    }

    fn layout(&self) -> Vec<BlockLayout> {
        self.state
            .blocks()
            .into_iter()
            .map(|b| BlockLayout {
                block: b.label(),
                names: self.state.block_names(b, &self.data.design),
            })
            .collect()
    }

    /// Run to completion, storing thinned post-burn-in samples.
    pub fn run(mut self) -> Result<ChainOutput> {
        let lat = &self.data.lattice;
        let mut store = SampleStore::new(lat.nx(), lat.ny(), self.state.n_classes(), self.layout());
        let burn = self.cfg.burn_in();
        let n_iter = self.cfg.n_iter;
        let report = (n_iter / 10).max(1);
        while self.iteration < n_iter {
            self.step();
            let it = self.iteration;
            if it > burn && (it - burn) % self.cfg.thin == 0 {
                let ls = self
                    .state
                    .level_set
                    .as_ref()
                    .map(|ls| (0..lat.len()).map(|j| ls.v(j)).collect());
                store.push(
                    it,
                    self.state.param_values(),
                    &self.state.log_intensity(),
                    &self.state.gamma.gamma,
                    ls,
                );
            }
            if it % report == 0 {
                log::info!("iteration {it}/{n_iter}");
            }
        }
        let diagnostics = self.diagnostics(&store);
        for f in &diagnostics.flags {
            log::warn!("{f}");
        }
        Ok(ChainOutput {
            store,
            diagnostics,
            state: self.state,
        })
    }

    fn diagnostics(&self, store: &SampleStore) -> Diagnostics {
        let mut blocks = Vec::new();
        let all = self
            .ls_sampler
            .iter()
            .chain(self.class_samplers.iter().flatten());
        let mut flags = Vec::new();
        for s in all {
            let d = BlockDiagnostics {
                block: s.block.label(),
                theta_acceptance: (!s.theta.is_empty()).then(|| s.theta_acc.rate()).flatten(),
                field_acceptance: s.has_field.then(|| s.field_acc.rate()).flatten(),
                theta_step: (!s.theta.is_empty()).then_some(s.theta.step),
                pcn_delta: s.has_field.then_some(s.delta),
                rejected_nonfinite: s.rejected_nonfinite,
            };
            for (what, r) in [("parameter", d.theta_acceptance), ("field", d.field_acceptance)] {
                if let Some(r) = r {
                    if !(0.05..=0.95).contains(&r) {
                        flags.push(format!("{} {what} acceptance rate {r:.3} is far from target", d.block));
                    }
                }
            }
            blocks.push(d);
        }
        if let Some(r) = self.marginal_acc.rate() {
            blocks.push(BlockDiagnostics {
                block: "level_set_marginal".into(),
                theta_acceptance: Some(r),
                field_acceptance: None,
                theta_step: Some(self.marginal_moves[0].scale),
                pcn_delta: None,
                rejected_nonfinite: 0,
            });
        }
        if self.data.counts.counts.iter().all(|&c| c == 0) {
            flags.push("all-zero data: intensities are determined by the prior alone".into());
        }
        let ess = store
            .param_names()
            .into_iter()
            .map(|n| {
                let tr = store.trace(&n).unwrap_or_default();
                (n, effective_sample_size(&tr))
            })
            .collect();
        Diagnostics {
            n_iter: self.cfg.n_iter,
            burn_in: self.cfg.burn_in(),
            thin: self.cfg.thin,
            seed: self.cfg.seed,
            n_samples: store.len(),
            blocks,
            ess,
            flags,
        }
    }
}

/// Run a chain from the spec's initial values.
pub fn run_chain(spec: &FitSpec, data: &FitData, cfg: &ChainConfig) -> Result<ChainOutput> {
    Chain::new(spec, data, cfg.clone())?.run()
}

fn theta_update(
    s: &mut BlockSampler,
    u: Vec<f64>,
    target: impl Fn(&[f64]) -> Option<ThetaEval>,
    t: usize,
    adapting: bool,
    counting: bool,
    target_accept: f64,
) -> Option<ThetaCache> {
    if s.theta.is_empty() {
        return None;
    }
    let Some(cur) = target(&u) else {
        s.rejected_nonfinite += 1;
        return None;
    };
    let (alpha, next) = s.theta.step(&u, &cur, &target, &mut s.rng);
    let accepted = next.is_some();
    if counting {
        s.theta_acc.record(accepted);
    }
    let (u_now, cache) = match next {
        Some((v, e)) => (v, Some(e.cache)),
        None => (u, None),
    };
    if adapting {
        s.theta.adapt(t, alpha, &u_now, target_accept);
    }
    cache
}

struct Ctx<'c> {
    gamma: &'c ClassificationField,
    data: &'c FitData,
    spec: &'c FitSpec,
    cfg: &'c ChainConfig,
    t: usize,
    adapting: bool,
    counting: bool,
}

impl BlockSampler {
    /// Track the likelihood curvature during burn-in; frozen afterwards.
    fn observe_curvature(&mut self, now: f64, adapting: bool) {
        match self.curvature {
            None => self.curvature = Some(now),
            Some(c) if adapting => self.curvature = Some(0.9 * c + 0.1 * now),
            _ => {}
        }
    }

    fn scales(&self, basis: &crate::grf::SpectralBasis, cfg: &ChainConfig) -> Option<Vec<f64>> {
        cfg.precondition
            .then(|| curvature_scales(basis.sqrt_weights(), self.curvature.unwrap_or(0.0)))
    }

    /// One centred move of kind `i`, with adaptation and a closure that
    /// proposes and applies the move given the random-walk increment.
    fn centred<F>(&mut self, i: usize, ctx: &Ctx, f: F)
    where
        F: FnOnce(f64, &mut ChaCha8Rng) -> f64,
    {
        let eps = self.moves[i].draw(&mut self.rng);
        let alpha = f(eps, &mut self.rng);
        if ctx.adapting {
            self.moves[i].adapt(ctx.t, alpha);
        }
    }
}

fn shift_accept(log_a: f64, rng: &mut ChaCha8Rng) -> (f64, bool) {
    let a = if log_a.is_nan() { 0.0 } else { log_a.min(0.0).exp() };
    (a, rng.random::<f64>() < a)
}

fn update_class(class: &mut ClassState, k: usize, s: &mut BlockSampler, ctx: &Ctx) {
    let (data, spec, cfg) = (ctx.data, ctx.spec, ctx.cfg);
    let gamma = ctx.gamma;
    let u = class_unconstrained(class);
    let cache = {
        let c: &ClassState = class;
        theta_update(
            s,
            u,
            |u| class_target(c, k, gamma, data, &spec.priors, u),
            ctx.t,
            ctx.adapting,
            ctx.counting,
            cfg.target_accept,
        )
    };
    match (cache, &mut *class) {
        (
            Some(ThetaCache::Field {
                basis,
                values,
                beta: b,
                mean: m,
            }),
            ClassState::Field { field, beta, mean, .. },
        ) => {
            field.basis = basis;
            field.values = values;
            *beta = b;
            *mean = m;
        }
        (Some(ThetaCache::Regression { beta: b, mean: m }), ClassState::Regression { beta, mean }) => {
            *beta = b;
            *mean = m;
        }
        _ => {}
    }
    let ClassState::Field {
        field,
        beta,
        mean,
        bounds,
    } = class
    else {
        return;
    };
    let priors = &spec.priors;
    for _ in 0..cfg.interweave_steps {
        if s.free[0] {
            s.centred(0, ctx, |e, rng| sigma_move(field, priors, e, rng).0);
        }
        if s.free[1] {
            s.centred(1, ctx, |e, rng| range_move(field, bounds, priors, e, rng).0);
        }
        if !beta.is_empty() && s.free[2] {
            s.centred(2, ctx, |e, rng| {
                let (dp, z0) = shift_prior_delta(field, -e);
                let log_a = priors.beta(beta[0] + e).0 - priors.beta(beta[0]).0 + dp;
                let (a, ok) = shift_accept(log_a, rng);
                if ok {
                    beta[0] += e;
                    mean.iter_mut().for_each(|m| *m += e);
                    field.white[0] = z0;
                    field.values.iter_mut().for_each(|x| *x -= e);
                }
                a
            });
        }
    }
    let mut cur = class_potential(field, mean, k, gamma, data, &field.white);
    let area = data.cell_area();
    let now: f64 = gamma
        .gamma
        .iter()
        .enumerate()
        .filter(|(_, &g)| g as usize == k)
        .map(|(j, _)| area * (field.values[j] + mean[j]).exp())
        .sum();
    s.observe_curvature(now, ctx.adapting);
    let scales = s.scales(&field.basis, cfg);
    for _ in 0..cfg.field_steps {
        let (alpha, next) = {
            let f: &_ = field;
            let m: &[f64] = mean;
            pcn_step(
                &f.grid,
                &f.white,
                &cur,
                s.delta,
                scales.as_deref(),
                |w| class_potential(f, m, k, gamma, data, w),
                &mut s.rng,
            )
        };
        if ctx.counting {
            s.field_acc.record(next.is_some());
        }
        if let Some((w, e)) = next {
            field.white = w;
            field.values = e.values.clone();
            cur = e;
        }
        if ctx.adapting {
            s.delta = adapt_delta(s.delta, ctx.t, alpha, cfg.target_accept);
        }
    }
}

/// Summed probit curvature `−∂² ln P(Γ_j | v) / ∂v²` over the window.
fn probit_curvature(ls: &LevelSetState, gamma: &ClassificationField) -> f64 {
    let h = 1e-4 * ls.nugget;
    gamma
        .gamma
        .iter()
        .enumerate()
        .map(|(j, &g)| {
            let v = ls.v(j);
            let up = probit_term(g as usize, v + h, &ls.thresholds, ls.nugget).d_v;
            let dn = probit_term(g as usize, v - h, &ls.thresholds, ls.nugget).d_v;
            (-(up - dn) / (2.0 * h)).max(0.0)
        })
        .sum()
}

fn update_level_set(ls: &mut LevelSetState, s: &mut BlockSampler, ctx: &Ctx) {
    let (data, spec, cfg) = (ctx.data, ctx.spec, ctx.cfg);
    let gamma = ctx.gamma;
    let u = level_set_unconstrained(ls);
    let cache = {
        let l: &LevelSetState = ls;
        theta_update(
            s,
            u,
            |u| level_set_target(l, gamma, data, &spec.priors, u),
            ctx.t,
            ctx.adapting,
            ctx.counting,
            cfg.target_accept,
        )
    };
    if let Some(ThetaCache::LevelSet {
        basis,
        values,
        thresholds,
        nugget,
        beta,
        mean,
    }) = cache
    {
        ls.field.basis = basis;
        ls.field.values = values;
        ls.thresholds = thresholds;
        ls.nugget = nugget;
        ls.beta = beta;
        ls.mean = mean;
    }
    let priors = &spec.priors;
    let nk = ls.thresholds.len();
    let thresholds_free = s.free[..nk].iter().all(|&f| f);
    let intercept_free = ls.mean_estimated && s.free.get(nk + 2).copied().unwrap_or(false);
    for _ in 0..cfg.interweave_steps {
        if s.free[nk + 1] {
            s.centred(1, ctx, |e, rng| range_move(&mut ls.field, &ls.bounds, priors, e, rng).0);
        }
        if thresholds_free {
            s.centred(2, ctx, |e, rng| {
                let (dp, z0) = shift_prior_delta(&ls.field, e);
                let dc: f64 = ls
                    .thresholds
                    .iter()
                    .map(|c| priors.threshold(c + e).0 - priors.threshold(*c).0)
                    .sum();
                let (a, ok) = shift_accept(dc + dp, rng);
                if ok {
                    ls.thresholds.iter_mut().for_each(|c| *c += e);
                    ls.field.white[0] = z0;
                    ls.field.values.iter_mut().for_each(|x| *x += e);
                }
                a
            });
        }
        if intercept_free {
            s.centred(0, ctx, |e, rng| {
                let (dp, z0) = shift_prior_delta(&ls.field, -e);
                let log_a = priors.beta(ls.beta[0] + e).0 - priors.beta(ls.beta[0]).0 + dp;
                let (a, ok) = shift_accept(log_a, rng);
                if ok {
                    ls.beta[0] += e;
                    ls.mean.iter_mut().for_each(|m| *m += e);
                    ls.field.white[0] = z0;
                    ls.field.values.iter_mut().for_each(|x| *x -= e);
                }
                a
            });
        }
    }
    s.observe_curvature(probit_curvature(ls, gamma), ctx.adapting);
    let scales = s.scales(&ls.field.basis, cfg);
    let mut cur = level_set_potential(&ls.field, &ls.mean, &ls.thresholds, ls.nugget, gamma, &ls.field.white);
    for _ in 0..cfg.field_steps {
        let (alpha, next) = {
            let l: &LevelSetState = ls;
            pcn_step(
                &l.field.grid,
                &l.field.white,
                &cur,
                s.delta,
                scales.as_deref(),
                |w| level_set_potential(&l.field, &l.mean, &l.thresholds, l.nugget, gamma, w),
                &mut s.rng,
            )
        };
        if ctx.counting {
            s.field_acc.record(next.is_some());
        }
        if let Some((w, e)) = next {
            ls.field.white = w;
            ls.field.values = e.values.clone();
            cur = e;
        }
        if ctx.adapting {
            s.delta = adapt_delta(s.delta, ctx.t, alpha, cfg.target_accept);
        }
    }
}
