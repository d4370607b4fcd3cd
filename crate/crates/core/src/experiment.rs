//! Experiment drivers: multi-trial runs, parameter sweeps and regret checks,
//! plus their configuration and CSV outputs.
//!
//! Configuration is a flat TOML key-value file. Values are resolved in three
//! layers: the preset for the chosen algorithm and stream kind, then the
//! config file, then command-line overrides. Every output directory receives
//! the fully resolved configuration as `config.toml`, which re-runs the
//! experiment bit for bit.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{run_stream, RunOptions};
use crate::config::{BoostConfig, LearnerKind, UpdateMode, WeightRule};
use crate::data::{write_csv, StreamKind, StreamSpec};
use crate::error::{Error, Result};
use crate::format::fmt9;
use crate::learners::{batch_ls_oracle, batch_sse, NmState};
use crate::metrics::{LambdaPoint, RunReport};
use crate::rng::derive_trial_seed;
use crate::sample::{stream_dim, Sample};

/// Default stream length of the synthetic experiments.
pub const DEFAULT_LENGTH: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "nm")]
    Nm,
    #[serde(rename = "bsgd-wu")]
    BsgdWu,
    #[serde(rename = "bsgd-dr")]
    BsgdDr,
    #[serde(rename = "bsgd-ru")]
    BsgdRu,
    #[serde(rename = "bsgd-oza")]
    BsgdOza,
    #[serde(rename = "bnm-wu")]
    BnmWu,
    #[serde(rename = "bnm-dr")]
    BnmDr,
    #[serde(rename = "bnm-ru")]
    BnmRu,
    #[serde(rename = "bnm-oza")]
    BnmOza,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Sgd,
        Algorithm::Nm,
        Algorithm::BsgdWu,
        Algorithm::BsgdDr,
        Algorithm::BsgdRu,
        Algorithm::BsgdOza,
        Algorithm::BnmWu,
        Algorithm::BnmDr,
        Algorithm::BnmRu,
        Algorithm::BnmOza,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Nm => "nm",
            Algorithm::BsgdWu => "bsgd-wu",
            Algorithm::BsgdDr => "bsgd-dr",
            Algorithm::BsgdRu => "bsgd-ru",
            Algorithm::BsgdOza => "bsgd-oza",
            Algorithm::BnmWu => "bnm-wu",
            Algorithm::BnmDr => "bnm-dr",
            Algorithm::BnmRu => "bnm-ru",
            Algorithm::BnmOza => "bnm-oza",
        }
    }

    pub fn learner(self) -> LearnerKind {
        match self {
            Algorithm::Sgd
            | Algorithm::BsgdWu
            | Algorithm::BsgdDr
            | Algorithm::BsgdRu
            | Algorithm::BsgdOza => LearnerKind::Sgd,
            _ => LearnerKind::Nm,
        }
    }

    pub fn mode(self) -> UpdateMode {
        match self {
            Algorithm::Sgd | Algorithm::Nm | Algorithm::BsgdWu | Algorithm::BnmWu => {
                UpdateMode::Weighted
            }
            Algorithm::BsgdDr | Algorithm::BnmDr => UpdateMode::DataReuse,
            Algorithm::BsgdRu | Algorithm::BnmRu => UpdateMode::Random,
            Algorithm::BsgdOza | Algorithm::BnmOza => UpdateMode::OzaPoisson,
        }
    }

    pub fn is_boosted(self) -> bool {
        !matches!(self, Algorithm::Sgd | Algorithm::Nm)
    }

    /// The single-learner algorithm of the same learner kind.
    pub fn baseline(self) -> Algorithm {
        match self.learner() {
            LearnerKind::Sgd => Algorithm::Sgd,
            LearnerKind::Nm => Algorithm::Nm,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == lower)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

impl FromStr for StreamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stationary" => Ok(StreamKind::Stationary),
            "duffing" => Ok(StreamKind::Duffing),
            "csv" => Ok(StreamKind::Csv),
            _ => Err(Error::Config(format!("unknown stream kind `{s}`"))),
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub stream: StreamKind,
    pub length: usize,
    pub noise_var: f64,
    pub rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub has_header: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_column: Option<usize>,
    pub m: usize,
    pub sigma_m2: f64,
    pub c: f64,
    pub k_reuse: u32,
    pub mu: f64,
    pub mu_z: f64,
    pub beta: f64,
    pub v: f64,
    pub delta_floor: f64,
    pub combiner_eps: f64,
    /// Switches the weights to the known-sigma rule with this value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub known_sigma2: Option<f64>,
    pub seed: u64,
    pub trials: usize,
    /// Worker threads for trials; 0 uses every core.
    pub workers: usize,
    /// Record lambda every this many rounds; 0 disables the trace.
    pub trace_every: usize,
    pub keep_trial_curves: bool,
    pub record_timing: bool,
}

impl ExperimentConfig {
    /// Published defaults for an algorithm on a stream kind.
    pub fn preset(algorithm: Algorithm, stream: StreamKind) -> Self {
        let nm = algorithm.learner() == LearnerKind::Nm;
        let stochastic_mode = algorithm.mode().is_stochastic();
        let (length, beta, sigma_m2, trials) = match stream {
            StreamKind::Stationary => (DEFAULT_LENGTH, 0.9999, if nm { 0.004 } else { 0.02 }, 100),
            StreamKind::Duffing => (
                DEFAULT_LENGTH,
                0.999,
                if nm { 0.17 } else { 0.25 },
                if stochastic_mode { 20 } else { 1 },
            ),
            StreamKind::Csv => (
                0,
                0.999,
                if nm { 0.004 } else { 0.02 },
                if stochastic_mode { 20 } else { 1 },
            ),
        };
        let boost = BoostConfig::default();
        Self {
            algorithm,
            stream,
            length,
            noise_var: 0.01,
            rho: 0.5,
            path: None,
            has_header: false,
            target_column: None,
            m: if algorithm.is_boosted() { 20 } else { 1 },
            sigma_m2,
            c: 1.0,
            k_reuse: 5,
            mu: 0.1,
            mu_z: boost.mu_z,
            beta,
            v: boost.v,
            delta_floor: boost.delta_floor,
            combiner_eps: boost.combiner_eps,
            known_sigma2: None,
            seed: 1,
            trials,
            workers: 0,
            trace_every: 0,
            keep_trial_curves: false,
            record_timing: false,
        }
    }

    /// Applies `layers` in order on top of the preset picked by the last
    /// layer naming an algorithm and stream kind; later layers win.
    pub fn resolve(layers: &[&ConfigOverrides]) -> Result<Self> {
        let algorithm = layers
            .iter()
            .rev()
            .find_map(|l| l.algorithm)
            .unwrap_or(Algorithm::BsgdWu);
        let stream = layers
            .iter()
            .rev()
            .find_map(|l| l.stream)
            .unwrap_or(StreamKind::Stationary);
        let mut cfg = Self::preset(algorithm, stream);
        for layer in layers {
            layer.apply(&mut cfg);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.algorithm.is_boosted() && self.m != 1 {
            return Err(Error::Config(format!(
                "algorithm `{}` is a single learner but m = {}",
                self.algorithm, self.m
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.k_reuse == 0 {
            return Err(Error::Config(format!(
                "algorithm `{}` needs a data-reuse multiplier k_reuse >= 1",
                self.algorithm
            )));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config("seed must fit in 63 bits".into()));
        }
        match self.stream {
            StreamKind::Csv if self.path.is_none() => {
                return Err(Error::Config("stream = \"csv\" needs a path".into()))
            }
            StreamKind::Stationary if self.length < 2 => {
                return Err(Error::Config("stationary streams need length >= 2".into()))
            }
            StreamKind::Duffing if self.length < 1 => {
                return Err(Error::Config("duffing streams need length >= 1".into()))
            }
            _ => {}
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::Config("rho must lie in (-1, 1)".into()));
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(Error::Config(
                "noise_var must be finite and nonnegative".into(),
            ));
        }
        self.boost_config(0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn boost_config(&self, seed: u64) -> BoostConfig {
        BoostConfig {
            m: self.m,
            sigma_m2: self.sigma_m2,
            c: self.c,
            k_reuse: self.k_reuse,
            mu: self.mu,
            mu_z: self.mu_z,
            beta: self.beta,
            v: self.v,
            mode: self.algorithm.mode(),
            learner: self.algorithm.learner(),
            seed,
            delta_floor: self.delta_floor,
            weight_rule: match self.known_sigma2 {
                Some(sigma2) => WeightRule::KnownSigma { sigma2 },
                None => WeightRule::Adaptive,
            },
            combiner_eps: self.combiner_eps,
        }
    }

    pub fn stream_spec(&self, seed: u64) -> StreamSpec {
        StreamSpec {
            kind: self.stream,
            length: self.length,
            noise_var: self.noise_var,
            rho: self.rho,
            seed,
            path: self.path.clone(),
            has_header: self.has_header,
            target_column: self.target_column,
        }
    }

    /// `(stream seed, ensemble seed)` of trial `trial`.
    pub fn trial_seeds(&self, trial: usize) -> (u64, u64) {
        let base = derive_trial_seed(self.seed, trial as u64);
        (derive_trial_seed(base, 0), derive_trial_seed(base, 1))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            trace_every: (self.trace_every > 0).then_some(self.trace_every),
            keep_logs: false,
            record_timing: self.record_timing,
        }
    }
}

/// Partial configuration: one layer of a config file or command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub algorithm: Option<Algorithm>,
    pub stream: Option<StreamKind>,
    pub length: Option<usize>,
    pub noise_var: Option<f64>,
    pub rho: Option<f64>,
    pub path: Option<PathBuf>,
    pub has_header: Option<bool>,
    pub target_column: Option<usize>,
    pub m: Option<usize>,
    pub sigma_m2: Option<f64>,
    pub c: Option<f64>,
    pub k_reuse: Option<u32>,
    pub mu: Option<f64>,
    pub mu_z: Option<f64>,
    pub beta: Option<f64>,
    pub v: Option<f64>,
    pub delta_floor: Option<f64>,
    pub combiner_eps: Option<f64>,
    pub known_sigma2: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub workers: Option<usize>,
    pub trace_every: Option<usize>,
    pub keep_trial_curves: Option<bool>,
    pub record_timing: Option<bool>,
}

impl ConfigOverrides {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn apply(&self, cfg: &mut ExperimentConfig) {
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field.clone() { cfg.$field = v; })*
            };
        }
        set!(
            algorithm,
            stream,
            length,
            noise_var,
            rho,
            has_header,
            m,
            sigma_m2,
            c,
            k_reuse,
            mu,
            mu_z,
            beta,
            v,
            delta_floor,
            combiner_eps,
            seed,
            trials,
            workers,
            trace_every,
            keep_trial_curves,
            record_timing
        );
        if self.path.is_some() {
            cfg.path = self.path.clone();
        }
        if self.target_column.is_some() {
            cfg.target_column = self.target_column;
        }
        if self.known_sigma2.is_some() {
            cfg.known_sigma2 = self.known_sigma2;
        }
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Every trial of one experiment, aggregated.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub reports: Vec<RunReport>,
    /// Pointwise mean of the per-trial ASE curves.
    pub ase_mean: Vec<f64>,
    pub mse_mean: f64,
    /// Sample standard deviation of the final MSE over trials (0 for one
    /// trial).
    pub mse_std: f64,
    /// Trial-averaged lambda trace.
    pub lambda_trace: Option<Vec<LambdaPoint>>,
    /// Trial-averaged time-mean lambda per learner.
    pub mean_lambda: Vec<f64>,
    pub wall_time_s: f64,
}

/// Runs every trial of `cfg` (in parallel) without writing anything.
pub fn run_trials(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let started = Instant::now();
    let shared: Option<Vec<Sample>> = match cfg.stream {
        StreamKind::Stationary => None,
        _ => Some(cfg.stream_spec(0).generate()?),
    };
    let opts = cfg.run_options();
    let run_one = |trial: usize| -> Result<RunReport> {
        let (data_seed, engine_seed) = cfg.trial_seeds(trial);
        let owned;
        let stream: &[Sample] = match &shared {
            Some(s) => s,
            None => {
                owned = cfg.stream_spec(data_seed).generate()?;
                &owned
            }
        };
        run_stream(&cfg.boost_config(engine_seed), stream, &opts)
    };
    let pool = thread_pool(cfg.workers)?;
    let reports: Vec<RunReport> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(run_one)
            .collect::<Result<_>>()
    })?;
    Ok(summarize(
        cfg.clone(),
        reports,
        started.elapsed().as_secs_f64(),
    ))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(config: ExperimentConfig, reports: Vec<RunReport>, wall_time_s: f64) -> RunSummary {
    let n = reports.len() as f64;
    let t_len = reports[0].t_len;
    let m = reports[0].m;
    let mut ase_mean = vec![0.0; t_len];
    for r in &reports {
        for (acc, v) in ase_mean.iter_mut().zip(&r.ase_curve) {
            *acc += v;
        }
    }
    for v in &mut ase_mean {
        *v /= n;
    }
    let finals: Vec<f64> = reports.iter().map(|r| r.final_mse).collect();
    let (mse_mean, mse_std) = mean_std(&finals);
    let mut mean_lambda = vec![0.0; m];
    for r in &reports {
        for (acc, v) in mean_lambda.iter_mut().zip(&r.mean_lambda) {
            *acc += v / n;
        }
    }
    let lambda_trace = reports[0].lambda_trace.as_ref().map(|first| {
        first
            .iter()
            .enumerate()
            .map(|(i, p)| LambdaPoint {
                t: p.t,
                k: p.k,
                lambda: reports
                    .iter()
                    .map(|r| r.lambda_trace.as_ref().expect("trace on every trial")[i].lambda)
                    .sum::<f64>()
                    / n,
            })
            .collect()
    });
    RunSummary {
        config,
        reports,
        ase_mean,
        mse_mean,
        mse_std,
        lambda_trace,
        mean_lambda,
        wall_time_s,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `config.toml`, `ase.csv`, `report.csv` and, when enabled,
/// `lambda_trace.csv` and `ase_trials.csv` into `dir`.
pub fn write_run_outputs(summary: &RunSummary, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_text(&dir.join("config.toml"), &summary.config.to_toml())?;

    let mut ase = String::from("t,ase,mse_running\n");
    for (i, v) in summary.ase_mean.iter().enumerate() {
        let t = i + 1;
        ase.push_str(&format!("{t},{},{}\n", fmt9(*v), fmt9(v / t as f64)));
    }
    write_text(&dir.join("ase.csv"), &ase)?;

    let mut report = String::from("trial,final_mse,updates_total,wall_time_s\n");
    for (i, r) in summary.reports.iter().enumerate() {
        report.push_str(&format!(
            "{i},{},{},{}\n",
            fmt9(r.final_mse),
            r.total_updates(),
            fmt9(r.wall_time_s)
        ));
    }
    write_text(&dir.join("report.csv"), &report)?;

    if let Some(trace) = &summary.lambda_trace {
        let mut out = String::from("t,k,lambda\n");
        for p in trace {
            out.push_str(&format!("{},{},{}\n", p.t, p.k, fmt9(p.lambda)));
        }
        write_text(&dir.join("lambda_trace.csv"), &out)?;
    }
    if summary.config.keep_trial_curves {
        let mut out = String::from("t,trial,ase\n");
        for (i, r) in summary.reports.iter().enumerate() {
            for (j, v) in r.ase_curve.iter().enumerate() {
                out.push_str(&format!("{},{i},{}\n", j + 1, fmt9(*v)));
            }
        }
        write_text(&dir.join("ase_trials.csv"), &out)?;
    }
    Ok(())
}

/// Materializes a stream to CSV.
pub fn cmd_gen(spec: &StreamSpec, out: &Path) -> Result<usize> {
    let samples = spec.generate()?;
    write_csv(&samples, out)?;
    Ok(samples.len())
}

pub fn cmd_run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let summary = run_trials(cfg)?;
    write_run_outputs(&summary, out_dir)?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    SigmaM2,
    C,
    M,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::SigmaM2 => "sigma_m2",
            SweepParam::C => "c",
            SweepParam::M => "m",
        }
    }

    /// Copy of `cfg` with this parameter set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut out = cfg.clone();
        match self {
            SweepParam::SigmaM2 => out.sigma_m2 = value,
            SweepParam::C => out.c = value,
            SweepParam::M => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(Error::Config(format!(
                        "m = {value} is not a positive integer"
                    )));
                }
                out.m = value as usize;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma_m2" => Ok(SweepParam::SigmaM2),
            "c" => Ok(SweepParam::C),
            "m" => Ok(SweepParam::M),
            _ => Err(Error::Config(format!(
                "unknown sweep parameter `{s}` (expected sigma_m2, c or m)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub error: Option<String>,
}

/// One multi-trial run per grid value. A failing point is recorded with
/// NaN statistics and its error; the sweep carries on.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    grid: &[f64],
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    cfg.validate()?;
    Ok(grid
        .iter()
        .map(
            |&value| match param.apply(cfg, value).and_then(|c| run_trials(&c)) {
                Ok(s) => SweepPoint {
                    value,
                    mse_mean: s.mse_mean,
                    mse_std: s.mse_std,
                    error: None,
                },
                Err(e) => SweepPoint {
                    value,
                    mse_mean: f64::NAN,
                    mse_std: f64::NAN,
                    error: Some(e.to_string()),
                },
            },
        )
        .collect())
}

pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    param: SweepParam,
    grid: &[f64],
    out_dir: &Path,
) -> Result<Vec<SweepPoint>> {
    let points = run_sweep(cfg, param, grid)?;
    ensure_dir(out_dir)?;
    write_text(&out_dir.join("config.toml"), &cfg.to_toml())?;
    let mut out = String::from("value,mse_mean,mse_std\n");
    for p in &points {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt9(p.value),
            fmt9(p.mse_mean),
            fmt9(p.mse_std)
        ));
    }
    write_text(&out_dir.join("sweep.csv"), &out)?;
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretRow {
    pub t: usize,
    /// Online RLS accumulated squared error minus the best fixed batch fit,
    /// averaged over trials.
    pub regret: f64,
    /// `regret / ln T`; NaN at `T = 1`.
    pub regret_over_ln_t: f64,
}

/// Regret of a single online RLS learner against the batch least squares
/// fit on each prefix length in `t_grid`.
///
/// The learner uses `cfg.beta` and `cfg.v`; the batch fit is unregularized.
pub fn run_regret(cfg: &ExperimentConfig, t_grid: &[usize]) -> Result<Vec<RegretRow>> {
    if t_grid.is_empty() {
        return Err(Error::Config("T grid is empty".into()));
    }
    if t_grid[0] == 0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "T grid must be positive and strictly increasing".into(),
        ));
    }
    cfg.validate()?;
    let t_max = *t_grid.last().expect("nonempty");
    let mut base = cfg.clone();
    if base.stream != StreamKind::Csv {
        base.length = t_max.max(2);
    }
    let trials = if cfg.stream == StreamKind::Stationary {
        cfg.trials
    } else {
        1
    };
    let one_trial = |trial: usize| -> Result<Vec<f64>> {
        let (data_seed, _) = base.trial_seeds(trial);
        let stream = base.stream_spec(data_seed).generate()?;
        if stream.len() < t_max {
            return Err(Error::Config(format!(
                "stream has {} samples, T grid needs {t_max}",
                stream.len()
            )));
        }
        let r = stream_dim(&stream)?;
        let mut learner = NmState::new(r, cfg.v, cfg.beta);
        let mut online = 0.0;
        let mut out = Vec::with_capacity(t_grid.len());
        let mut next = 0;
        for (i, s) in stream[..t_max].iter().enumerate() {
            let e = learner.weighted_step(s, 1.0).map_err(|e| match e {
                Error::Numerical { detail, .. } => Error::Numerical {
                    k: 1,
                    t: i + 1,
                    detail,
                },
                other => other,
            })?;
            online += e * e;
            if i + 1 == t_grid[next] {
                let prefix = &stream[..=i];
                let w = batch_ls_oracle(prefix, 0.0)?;
                out.push(online - batch_sse(prefix, &w));
                next += 1;
            }
        }
        Ok(out)
    };
    let pool = thread_pool(cfg.workers)?;
    let per_trial: Vec<Vec<f64>> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(one_trial)
            .collect::<Result<_>>()
    })?;
    Ok(t_grid
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let regret = per_trial.iter().map(|v| v[j]).sum::<f64>() / trials as f64;
            let ln_t = (t as f64).ln();
            RegretRow {
                t,
                regret,
                regret_over_ln_t: if ln_t > 0.0 { regret / ln_t } else { f64::NAN },
            }
        })
        .collect())
}

pub fn cmd_regret(
    cfg: &ExperimentConfig,
    t_grid: &[usize],
    out_dir: &Path,
) -> Result<Vec<RegretRow>> {
    let rows = run_regret(cfg, t_grid)?;
    ensure_dir(out_dir)?;
    write_text(&out_dir.join("config.toml"), &cfg.to_toml())?;
    let mut out = String::from("T,regret,regret_over_lnT\n");
    for r in &rows {
        out.push_str(&format!(
            "{},{},{}\n",
            r.t,
            fmt9(r.regret),
            fmt9(r.regret_over_ln_t)
        ));
    }
    write_text(&out_dir.join("regret.csv"), &out)?;
    Ok(rows)
}
