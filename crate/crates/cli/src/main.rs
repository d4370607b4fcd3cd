use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use boostreg::data::StreamKind;
use boostreg::experiment::{
    cmd_gen, cmd_regret, cmd_run, cmd_sweep, Algorithm, ConfigOverrides, ExperimentConfig,
    SweepParam,
};
use boostreg::{Error, ErrorKind};

/// Boosted online linear regression: data generation, experiments, sweeps
/// and regret checks.
#[derive(Parser)]
#[command(name = "boostreg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a stream to CSV (features, then target).
    Gen {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a multi-trial experiment.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Repeat an experiment over a grid of one parameter.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// sigma_m2, c or m.
        #[arg(long)]
        param: SweepParam,
        /// Comma separated grid values.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Online RLS regret against the batch least squares fit.
    Regret {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma separated, strictly increasing stream lengths.
        #[arg(long = "t-grid", value_delimiter = ',', required = true)]
        t_grid: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Configuration file plus per-key overrides. Flags beat the file, which
/// beats the preset for the algorithm and stream.
#[derive(Args)]
struct ConfigArgs {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// stationary, duffing or csv.
    #[arg(long)]
    stream: Option<StreamKind>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    noise_var: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// CSV input for `--stream csv`.
    #[arg(long)]
    path: Option<PathBuf>,
    #[arg(long)]
    has_header: Option<bool>,
    #[arg(long)]
    target_column: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    sigma_m2: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    k_reuse: Option<u32>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    mu_z: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    v: Option<f64>,
    #[arg(long)]
    delta_floor: Option<f64>,
    #[arg(long)]
    combiner_eps: Option<f64>,
    /// Use the known-sigma weight rule with this value.
    #[arg(long)]
    known_sigma2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Record lambda every N rounds.
    #[arg(long)]
    trace_every: Option<usize>,
    #[arg(long)]
    keep_trial_curves: Option<bool>,
    #[arg(long)]
    record_timing: Option<bool>,
}

impl ConfigArgs {
    fn file_layer(&self) -> Result<ConfigOverrides> {
        match &self.config {
            Some(path) => Ok(ConfigOverrides::from_file(path)?),
            None => Ok(ConfigOverrides::default()),
        }
    }

    fn flag_layer(&self) -> ConfigOverrides {
        ConfigOverrides {
            algorithm: self.algorithm,
            stream: self.stream,
            length: self.length,
            noise_var: self.noise_var,
            rho: self.rho,
            path: self.path.clone(),
            has_header: self.has_header,
            target_column: self.target_column,
            m: self.m,
            sigma_m2: self.sigma_m2,
            c: self.c,
            k_reuse: self.k_reuse,
            mu: self.mu,
            mu_z: self.mu_z,
            beta: self.beta,
            v: self.v,
            delta_floor: self.delta_floor,
            combiner_eps: self.combiner_eps,
            known_sigma2: self.known_sigma2,
            seed: self.seed,
            trials: self.trials,
            workers: self.workers,
            trace_every: self.trace_every,
            keep_trial_curves: self.keep_trial_curves,
            record_timing: self.record_timing,
        }
    }

    fn resolve(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig::resolve(&[
            &self.file_layer()?,
            &self.flag_layer(),
        ])?)
    }

    /// Regret runs default to a single RLS learner without forgetting.
    fn resolve_regret(&self) -> Result<ExperimentConfig> {
        let base = ConfigOverrides {
            algorithm: Some(Algorithm::Nm),
            beta: Some(1.0),
            ..Default::default()
        };
        Ok(ExperimentConfig::resolve(&[
            &base,
            &self.file_layer()?,
            &self.flag_layer(),
        ])?)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { config, out } => {
            let cfg = config.resolve()?;
            let n = cmd_gen(&cfg.stream_spec(cfg.seed), &out)?;
            eprintln!("wrote {n} samples to {}", out.display());
        }
        Command::Run { config, out } => {
            let cfg = config.resolve()?;
            let s = cmd_run(&cfg, &out)?;
            println!(
                "{} on {:?}: final MSE {:.6} ± {:.6} over {} trial(s) ({:.2} s)",
                cfg.algorithm,
                cfg.stream,
                s.mse_mean,
                s.mse_std,
                s.reports.len(),
                s.wall_time_s
            );
        }
        Command::Sweep {
            config,
            param,
            grid,
            out,
        } => {
            let cfg = config.resolve()?;
            let points = cmd_sweep(&cfg, param, &grid, &out)?;
            for p in &points {
                match &p.error {
                    None => println!(
                        "{}={}: {:.6} ± {:.6}",
                        param.name(),
                        p.value,
                        p.mse_mean,
                        p.mse_std
                    ),
                    Some(e) => println!("{}={}: failed: {e}", param.name(), p.value),
                }
            }
        }
        Command::Regret {
            config,
            t_grid,
            out,
        } => {
            let cfg = config.resolve_regret()?;
            for r in cmd_regret(&cfg, &t_grid, &out)? {
                println!(
                    "T={}: regret {:.6}, regret/ln T {:.6}",
                    r.t, r.regret, r.regret_over_ln_t
                );
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>().map(Error::kind) {
        Some(ErrorKind::Config) => 1,
        Some(ErrorKind::Io) => 3,
        Some(ErrorKind::Runtime) => 2,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli).context("boostreg failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
