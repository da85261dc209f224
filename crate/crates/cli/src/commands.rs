//! Resolved invocations and their execution.
//!
//! An [`Invocation`] carries everything a subcommand needs, so the copy
//! stored in a run's manifest is enough to repeat the run.

use std::path::{Path, PathBuf};

use lscp::convergence::{refine_study, RefineConfig};
use lscp::data::{
    bicubic_to_lattice, holm_bonferroni, sobel_slope, standardize, vif_prune, CovariateStack,
};
use lscp::geometry::{PointPattern, Window};
use lscp::inference::{
    constant_class_default, posterior_summaries, run_chain, ChainConfig, FitData, FitSpec, SampleStore,
};
use lscp::lattice::{bin_points, Lattice};
use lscp::model::{ClassSpec, Design, LscpModel};
use lscp::simulate::{preset_examples, preset_lattice, simulate_realization};
use lscp::summaries::{envelope, EnvelopeSource, Statistic};
use lscp::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{FitConfig, ModelConfig, PreprocessConfig, RefineFileConfig};
use crate::run::{write_raster, Manifest, Run};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    pub preset: Option<String>,
    pub config: ModelConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArgs {
    pub config: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentsArgs {
    pub model: LscpModel,
    pub r: Vec<f64>,
    pub panels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeArgs {
    /// Directory of a `fit` run.
    pub fit_run: PathBuf,
    pub statistic: Statistic,
    pub n_sims: usize,
    pub level: f64,
    pub r: Option<Vec<f64>>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeArgs {
    pub fit_run: PathBuf,
    pub level: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessArgs {
    pub config: PreprocessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineArgs {
    pub config: RefineFileConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Invocation {
    Simulate(SimulateArgs),
    Fit(FitArgs),
    Moments(MomentsArgs),
    Envelope(EnvelopeArgs),
    Summarize(SummarizeArgs),
    Preprocess(PreprocessArgs),
    Refine(RefineArgs),
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Fit(_) => "fit",
            Self::Moments(_) => "moments",
            Self::Envelope(_) => "envelope",
            Self::Summarize(_) => "summarize",
            Self::Preprocess(_) => "preprocess",
            Self::Refine(_) => "refine",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Simulate(a) => Some(a.seed),
            Self::Fit(a) => Some(a.config.chain.seed),
            Self::Envelope(a) => Some(a.seed),
            Self::Refine(a) => Some(a.config.chain.seed),
            _ => None,
        }
    }

    pub fn execute(self, out: Option<PathBuf>) -> Result<PathBuf> {
        let dir = crate::run::run_dir(out, &self);
        let existed = dir.exists();
        let mut run = Run::create(dir.clone(), self.clone())?;
        let done = match self {
            Self::Simulate(a) => simulate(&a, &mut run),
            Self::Fit(a) => fit(&a, &mut run),
            Self::Moments(a) => moments(&a, &mut run),
            Self::Envelope(a) => envelope_cmd(&a, &mut run),
            Self::Summarize(a) => summarize(&a, &mut run),
            Self::Preprocess(a) => preprocess(&a, &mut run),
            Self::Refine(a) => refine(&a, &mut run),
        };
        if let Err(e) = done {
            if !existed {
                let _ = std::fs::remove_dir_all(&dir);
            }
            return Err(e);
        }
        run.finish()
    }
}

/// Model config for a named preset on an `n × n` unit-square lattice.
pub fn preset_config(name: &str, n: usize) -> Result<ModelConfig> {
    let model = preset_examples(name)?;
    let l = preset_lattice(n)?;
    Ok(ModelConfig {
        window: *l.window(),
        lattice: crate::config::LatticeConfig { nx: n, ny: n, margins: l.margins() },
        model,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(csv::Reader::from_reader(f))
}

fn write_pattern(path: &Path, p: &PointPattern) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "y"])?;
    for (x, y) in &p.points {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush().map_err(|e| Error::Io { path: path.into(), source: e })
}

fn simulate(a: &SimulateArgs, run: &mut Run) -> Result<()> {
    let lattice = a.config.lattice.build(a.config.window)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let real = simulate_realization(&a.config.model, &lattice, None, &mut rng)?;
    write_pattern(&run.path("pattern.csv"), &real.pattern)?;
    real.counts.write_csv(&run.path("counts.csv"))?;
    let gamma: Vec<f64> = real.gamma.gamma.iter().map(|&g| g as f64 + 1.0).collect();
    write_raster(
        &run.path("latent.csv"),
        &lattice,
        &[("log_intensity", &real.log_intensity), ("class", &gamma), ("level_set", &real.level_set)],
    )?;
    log::info!("simulated {} points", real.pattern.len());
    Ok(())
}

/// Lattice, binned data, covariate design and fit spec for a fit config.
pub struct Prepared {
    pub lattice: Lattice,
    pub pattern: PointPattern,
    pub data: FitData,
    pub spec: FitSpec,
}

pub fn read_covariates(path: &Path, n_cells: usize) -> Result<Design> {
    let mut r = csv_reader(path)?;
    let names: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut cols = vec![Vec::with_capacity(n_cells); names.len()];
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        for (c, v) in cols.iter_mut().zip(rec.iter()) {
            c.push(v.trim().parse::<f64>().map_err(|_| Error::Parse {
                path: path.into(),
                line: i + 2,
                msg: format!("not a number: '{v}'"),
            })?);
        }
    }
    if cols.iter().any(|c| c.len() != n_cells) {
        return Err(Error::Shape(format!("{}: expected {n_cells} rows of covariates", path.display())));
    }
    Design::with_covariates(names, cols)
}

pub fn prepare(c: &FitConfig) -> Result<Prepared> {
    let lattice = c.lattice.build(c.window)?;
    if !c.data.pattern.exists() {
        return Err(Error::Data(format!("data file not found: {}", c.data.pattern.display())));
    }
    let pattern = lscp::data::load_pattern(&c.data.pattern, c.window)?;
    let counts = bin_points(&pattern, &lattice);
    let design = c.data.covariates.as_deref().map(|p| read_covariates(p, lattice.len())).transpose()?;
    let mut model = c.model.clone();
    if c.data.constant_from_data {
        let v = constant_class_default(&counts, &lattice);
        for cl in &mut model.classes {
            if let ClassSpec::Constant { value } = cl {
                *value = v;
            }
        }
    }
    let spec = FitSpec {
        model,
        priors: c.priors.clone(),
        fixed: c.fixed.clone(),
        estimate_level_set_mean: c.estimate_level_set_mean,
    };
    let data = FitData::new(lattice.clone(), counts, design)?;
    Ok(Prepared { lattice, pattern, data, spec })
}

fn fit(a: &FitArgs, run: &mut Run) -> Result<()> {
    let c = &a.config;
    run.record_input(&c.data.pattern)?;
    if let Some(p) = &c.data.covariates {
        run.record_input(p)?;
    }
    let p = prepare(c)?;
    let out = run_chain(&p.spec, &p.data, &c.chain)?;
    out.store.write_dir(&run.path("samples"))?;
    run.write_json("diagnostics.json", &out.diagnostics)?;
    run.write_json("fit_spec.json", &p.spec)?;
    for b in &out.diagnostics.blocks {
        run.acceptance.insert(b.block.clone(), serde_json::to_value(b)?);
    }
    write_summaries(&out.store, &p.lattice, 0.95, run.dir.as_path())
}

fn write_summaries(store: &SampleStore, lattice: &Lattice, level: f64, dir: &Path) -> Result<()> {
    let s = posterior_summaries(store, level)?;
    let mut cols: Vec<(String, &[f64])> = vec![("mean_log_intensity".into(), &s.mean_log_intensity)];
    for (k, p) in s.class_probabilities.iter().enumerate() {
        cols.push((format!("p_class{}", k + 1), p));
    }
    if let Some(v) = &s.level_set_mean {
        cols.push(("level_set_mean".into(), v));
    }
    let named: Vec<(&str, &[f64])> = cols.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    write_raster(&dir.join("posterior_rasters.csv"), lattice, &named)?;
    let p = dir.join("params.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["name", "mean", "sd", "lower", "upper", "ess"])?;
    for q in &s.params {
        w.write_record([
            q.name.clone(),
            q.mean.to_string(),
            q.sd.to_string(),
            q.lower.to_string(),
            q.upper.to_string(),
            q.ess.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::Io { path: p, source: e })
}

fn moments(a: &MomentsArgs, run: &mut Run) -> Result<()> {
    use lscp::moments::{k_function, pair_correlation, rho1};
    let r1 = rho1(&a.model, None);
    let p = run.path("moments.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(["r", "pcf", "K"])?;
    for &r in &a.r {
        let g = if r > 0.0 { pair_correlation(&a.model, r, None, None)? } else { f64::NAN };
        let k = k_function(&a.model, r, a.panels)?;
        w.write_record([r.to_string(), g.to_string(), k.to_string()])?;
    }
    w.flush().map_err(|e| Error::Io { path: p, source: e })?;
    run.write_json("moments.json", &serde_json::json!({ "rho1": r1 }))
}

fn fit_run_config(dir: &Path) -> Result<FitConfig> {
    match Manifest::read(dir)?.invocation {
        Invocation::Fit(f) => Ok(f.config),
        other => Err(Error::Usage(format!("{} is a '{}' run, not a fit run", dir.display(), other.name()))),
    }
}

/// Evenly spaced radii in `(0, rmax]` with `rmax` a quarter of the shorter
/// window side.
pub fn default_radii(w: &Window, n: usize) -> Vec<f64> {
    let rmax = 0.25 * w.width.min(w.height);
    (1..=n).map(|i| rmax * i as f64 / n as f64).collect()
}

fn envelope_cmd(a: &EnvelopeArgs, run: &mut Run) -> Result<()> {
    let c = fit_run_config(&a.fit_run)?;
    let p = prepare(&c)?;
    let store = SampleStore::read_dir(&a.fit_run.join("samples"))?;
    let r = a.r.clone().unwrap_or_else(|| default_radii(&c.window, 50));
    let e = envelope(
        EnvelopeSource::Posterior(&store),
        &p.lattice,
        &p.pattern,
        a.statistic,
        &r,
        a.n_sims,
        a.level,
        a.seed,
    )?;
    let tag = match a.statistic {
        Statistic::L => "L",
        Statistic::G => "g",
        Statistic::F => "F",
    };
    e.write_csv(&run.path(&format!("envelope_{tag}.csv")))?;
    log::info!("observed curve inside the band at {:.0}% of radii", 100.0 * e.coverage());
    Ok(())
}

fn summarize(a: &SummarizeArgs, run: &mut Run) -> Result<()> {
    let c = fit_run_config(&a.fit_run)?;
    let lattice = c.lattice.build(c.window)?;
    let store = SampleStore::read_dir(&a.fit_run.join("samples"))?;
    write_summaries(&store, &lattice, a.level, &run.dir)?;
    let names: Vec<String> = store.param_names().into_iter().filter(|n| n.starts_with("beta")).collect();
    if !names.is_empty() {
        let samples: Vec<Vec<f64>> = names.iter().map(|n| store.trace(n).expect("named trace")).collect();
        let sig = holm_bonferroni(&names, &samples, a.alpha)?;
        let p = run.path("significance.csv");
        let mut w = csv_writer(&p)?;
        w.write_record(["name", "p_value", "significant"])?;
        for s in &sig {
            w.write_record([s.name.clone(), s.p_value.to_string(), s.significant.to_string()])?;
        }
        w.flush().map_err(|e| Error::Io { path: p, source: e })?;
    }
    Ok(())
}

fn preprocess(a: &PreprocessArgs, run: &mut Run) -> Result<()> {
    let c = &a.config;
    let lattice = c.lattice.build(c.window)?;
    let mut names = Vec::new();
    let mut cols = Vec::new();
    if let Some(e) = &c.elevation {
        run.record_input(&e.path)?;
        let elev = e.load()?;
        names.push("Elev".to_string());
        cols.push(bicubic_to_lattice(&elev, &lattice)?);
        names.push("Slope".to_string());
        cols.push(bicubic_to_lattice(&sobel_slope(&elev)?, &lattice)?);
    }
    for r in &c.rasters {
        run.record_input(&r.path)?;
        names.push(r.name.clone());
        cols.push(bicubic_to_lattice(&r.load()?, &lattice)?);
    }
    if names.is_empty() {
        return Err(Error::Config("preprocess needs at least one raster".into()));
    }
    let (z, transform) = standardize(&CovariateStack::new(names, cols)?)?;
    let (kept, trace) = if z.len() >= 2 { vif_prune(&z, c.vif_threshold)? } else { (z.clone(), vec![]) };
    for s in &trace {
        log::info!("removed {} (VIF {:.2})", s.removed, s.vif);
    }
    let p = run.path("covariates.csv");
    let mut w = csv_writer(&p)?;
    w.write_record(&kept.names)?;
    for j in 0..lattice.len() {
        w.write_record(kept.columns.iter().map(|c| c[j].to_string()))?;
    }
    w.flush().map_err(|e| Error::Io { path: p, source: e })?;
    run.write_json("standardization.json", &transform)?;
    run.write_json("vif_trace.json", &trace)
}

fn refine(a: &RefineArgs, run: &mut Run) -> Result<()> {
    let c = &a.config;
    let finest = *c.sizes.last().ok_or_else(|| Error::Usage("refine needs lattice sizes".into()))?;
    let fine = Lattice::new(c.window, finest.0, finest.1, c.margins)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.data_seed);
    let pattern = simulate_realization(&c.truth, &fine, None, &mut rng)?.pattern;
    write_pattern(&run.path("pattern.csv"), &pattern)?;
    let mut spec = FitSpec::new(c.start.clone().unwrap_or_else(|| c.truth.clone()));
    spec.priors = c.priors.clone();
    let cfg = RefineConfig {
        sizes: c.sizes.clone(),
        orders: c.orders.clone(),
        margins: c.margins,
        chain: ChainConfig { ..c.chain.clone() },
        probes: c.probes.clone(),
    };
    let report = refine_study(&spec, &pattern, &cfg)?;
    report.write_csv(&run.path("refine.csv"))?;
    run.write_json("refine.json", &report)?;
    if let Some(f) = report.fraction_shrinking {
        log::info!("{:.0}% of probe functionals show shrinking differences", 100.0 * f);
    }
    Ok(())
}
