//! `lscp`: simulate, fit and check level-set Cox processes.

mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lscp::summaries::Statistic;
use lscp::{Error, Result};

use commands::{
    preset_config, EnvelopeArgs, FitArgs, Invocation, MomentsArgs, PreprocessArgs, RefineArgs, SimulateArgs,
    SummarizeArgs,
};
use config::{read_toml, FitConfig, ModelConfig, PreprocessConfig, RefineFileConfig};

#[derive(Parser)]
#[command(name = "lscp", version, about = "Level-set Cox processes on a lattice")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run directory (default: $LSCP_OUTPUT_ROOT/<command>-<hash>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one realisation of a model.
    Simulate {
        /// Model config (TOML with window, lattice and model).
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        /// Named example model on the unit square.
        #[arg(long)]
        preset: Option<String>,
        /// Lattice side for presets.
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fit a model to a point pattern by MCMC.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Override the chain seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of iterations.
        #[arg(long)]
        n_iter: Option<usize>,
    },
    /// Intensity, pair correlation and K function of a model.
    Moments {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        /// Comma-separated radii.
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<f64>,
        /// Quadrature panels for K.
        #[arg(long, default_value_t = 64)]
        panels: usize,
    },
    /// Simulation envelope of a summary statistic from a fit run.
    Envelope {
        #[arg(long)]
        fit_run: PathBuf,
        /// L, g or F.
        #[arg(long, default_value = "L")]
        statistic: String,
        #[arg(long, default_value_t = 99)]
        n_sims: usize,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Comma-separated radii (default: 50 up to a quarter of the shorter side).
        #[arg(long, value_delimiter = ',')]
        r: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Posterior summaries and coefficient significance from a fit run.
    Summarize {
        #[arg(long)]
        fit_run: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Family-wise error rate for the Holm procedure.
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Interpolate, standardise and prune covariate rasters.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit synthetic data on nested lattices and truncation orders.
    Refine {
        #[arg(long)]
        config: PathBuf,
    },
    /// Repeat the run recorded in a manifest.
    Rerun {
        /// Run directory or manifest file.
        manifest: PathBuf,
    },
}

fn model_config(config: Option<PathBuf>, preset: Option<String>, n: usize) -> Result<ModelConfig> {
    match (config, preset) {
        (Some(p), _) => read_toml(&p),
        (None, Some(name)) => preset_config(&name, n),
        (None, None) => Err(Error::Usage("give --config or --preset".into())),
    }
}

fn resolve(command: Command) -> Result<Invocation> {
    Ok(match command {
        Command::Simulate { config, preset, n, seed } => {
            let config = model_config(config, preset.clone(), n)?;
            Invocation::Simulate(SimulateArgs { preset, config, seed })
        }
        Command::Fit { config, seed, n_iter } => {
            let mut config = FitConfig::load(&config)?;
            if let Some(s) = seed {
                config.chain.seed = s;
            }
            if let Some(n) = n_iter {
                config.chain.n_iter = n;
            }
            Invocation::Fit(FitArgs { config })
        }
        Command::Moments { config, preset, r, panels } => {
            let model = model_config(config, preset, 64)?.model;
            Invocation::Moments(MomentsArgs { model, r, panels })
        }
        Command::Envelope { fit_run, statistic, n_sims, level, r, seed } => Invocation::Envelope(EnvelopeArgs {
            fit_run: std::path::absolute(&fit_run).unwrap_or(fit_run),
            statistic: statistic.parse::<Statistic>()?,
            n_sims,
            level,
            r,
            seed,
        }),
        Command::Summarize { fit_run, level, alpha } => Invocation::Summarize(SummarizeArgs {
            fit_run: std::path::absolute(&fit_run).unwrap_or(fit_run),
            level,
            alpha,
        }),
        Command::Preprocess { config } => Invocation::Preprocess(PreprocessArgs { config: PreprocessConfig::load(&config)? }),
        Command::Refine { config } => Invocation::Refine(RefineArgs { config: read_toml::<RefineFileConfig>(&config)? }),
        Command::Rerun { manifest } => {
            let dir = if manifest.is_dir() { manifest } else { manifest.parent().map(PathBuf::from).unwrap_or_default() };
            run::Manifest::read(&dir)?.invocation
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} threads: {e}");
            return ExitCode::from(1);
        }
    }
    match resolve(cli.command).and_then(|inv| inv.execute(cli.out)) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
