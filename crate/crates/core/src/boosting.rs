//! The boosted ensemble.
//!
//! Each round every learner first predicts with its current coefficients and
//! the combiner mixes those outputs into the final estimate. Once the desired
//! value is revealed the learners are visited top to bottom. Learner `k`
//! receives a running loss `l` that sums `sigma_m2 - e^2` over the learners
//! above it, converts it into an importance weight `lambda` in `(0, 1]`, and
//! spends that weight according to the configured [`UpdateMode`]. A learner
//! whose predecessors already fit the sample well receives a small weight.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{BoostConfig, LearnerKind, UpdateMode, WeightRule};
use crate::error::{Error, Result};
use crate::learners::{NmState, SgdState, WeakLearner};
use crate::metrics::{RunAccumulator, RunReport};
use crate::rng::RngStream;
use crate::sample::{clamp_unit, stream_dim, Sample};

/// Smallest weight ever handed to a learner.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// `l + sigma_m2 - e^2`.
pub fn update_loss(l: f64, sigma_m2: f64, e: f64) -> f64 {
    l + (sigma_m2 - e * e)
}

fn saturating_weight(log_weight: f64) -> f64 {
    if log_weight >= 0.0 {
        1.0
    } else {
        log_weight.exp().max(WEIGHT_FLOOR)
    }
}

/// `min{1, delta^(c l)}` evaluated in log space, with the base clamped into
/// `[floor, 1]`.
pub fn compute_weight(delta_prev: f64, c: f64, l: f64, floor: f64) -> f64 {
    let base = delta_prev.clamp(floor, 1.0);
    if c == 0.0 || base == 1.0 {
        return 1.0;
    }
    saturating_weight(c * l * base.ln())
}

/// `min{1, sigma2^(l / 2)}` for a known guaranteed weighted MSE `sigma2`.
pub fn compute_weight_known_sigma(sigma2: f64, l: f64) -> f64 {
    if sigma2 >= 1.0 {
        return 1.0;
    }
    saturating_weight(0.5 * l * sigma2.ln())
}

/// Folds one observation into the weighted, thresholded MSE estimate.
///
/// Returns `(delta, capital_lambda)` after the update. The prediction `f` is
/// clamped into `[-1, 1]` before use.
pub fn update_delta(
    delta_prev: f64,
    capital_lambda_prev: f64,
    lambda: f64,
    d: f64,
    f: f64,
) -> Result<(f64, f64)> {
    let f = clamp_unit(f)?;
    let total = capital_lambda_prev + lambda;
    let resid = d - f;
    let delta = (capital_lambda_prev * delta_prev + 0.25 * lambda * resid * resid) / total;
    Ok((delta, total))
}

/// Number of learner updates to apply this round.
///
/// `Weighted` always returns one (the caller folds `lambda` into it); the
/// other modes return a count of unit-weight updates.
pub fn schedule_updates(mode: UpdateMode, lambda: f64, k_reuse: u32, rng: &mut RngStream) -> u64 {
    match mode {
        UpdateMode::Weighted => 1,
        UpdateMode::DataReuse => (f64::from(k_reuse) * lambda).ceil().max(1.0) as u64,
        UpdateMode::OzaPoisson => rng.poisson(lambda),
        UpdateMode::Random => u64::from(rng.bernoulli(lambda)),
    }
}

pub fn combiner_predict(z: &[f64], y: &[f64]) -> Result<f64> {
    if z.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: z.len(),
            got: y.len(),
        });
    }
    Ok(z.iter().zip(y).map(|(a, b)| a * b).sum())
}

/// Normalized SGD step `z <- z + mu_z e y / |y|^2`, skipped when
/// `|y|^2 < eps`. Returns whether `z` was touched.
pub fn combiner_update(z: &mut [f64], y: &[f64], e: f64, mu_z: f64, eps: f64) -> bool {
    let norm2: f64 = y.iter().map(|v| v * v).sum();
    if norm2 < eps || norm2 == 0.0 {
        return false;
    }
    let gain = mu_z * e / norm2;
    for (zi, yi) in z.iter_mut().zip(y) {
        *zi += gain * yi;
    }
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSlot {
    pub learner: WeakLearner,
    /// Weighted, thresholded MSE estimate.
    pub delta: f64,
    /// Accumulated weight.
    pub capital_lambda: f64,
    pub update_count: u64,
}

/// Everything recorded about one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    /// 1-based time index.
    pub t: usize,
    pub lambdas: Vec<f64>,
    /// The loss ladder, `m + 1` entries; `losses[0] = 0`.
    pub losses: Vec<f64>,
    /// Pre-update errors `d - y_k`.
    pub learner_errors: Vec<f64>,
    pub learner_outputs: Vec<f64>,
    pub estimate: f64,
    pub final_error: f64,
    pub updates_applied: Vec<u64>,
}

impl RoundLog {
    fn with_capacity(m: usize) -> Self {
        Self {
            t: 0,
            lambdas: vec![0.0; m],
            losses: vec![0.0; m + 1],
            learner_errors: vec![0.0; m],
            learner_outputs: vec![0.0; m],
            estimate: 0.0,
            final_error: 0.0,
            updates_applied: vec![0; m],
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleState {
    pub slots: Vec<LearnerSlot>,
    /// Combiner weights.
    pub z: Vec<f64>,
    pub config: BoostConfig,
    rng: RngStream,
    dim: usize,
    t: usize,
}

impl EnsembleState {
    pub fn new(config: BoostConfig, dim: usize) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(Error::param("dim", "regressor dimension must be positive"));
        }
        let m = config.m;
        // Data reuse applies up to K unit steps per round, so each SGD step
        // is shrunk by K.
        let sgd_mu = match config.mode {
            UpdateMode::DataReuse => config.mu / f64::from(config.k_reuse),
            _ => config.mu,
        };
        let slot = LearnerSlot {
            learner: match config.learner {
                LearnerKind::Sgd => WeakLearner::Sgd(SgdState::new(dim, sgd_mu)),
                LearnerKind::Nm => WeakLearner::Nm(NmState::new(dim, config.v, config.beta)),
            },
            delta: 0.0,
            capital_lambda: 0.0,
            update_count: 0,
        };
        Ok(Self {
            slots: vec![slot; m],
            z: vec![1.0 / m as f64; m],
            rng: RngStream::new(config.seed),
            config,
            dim,
            t: 0,
        })
    }

    pub fn m(&self) -> usize {
        self.slots.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rounds processed so far.
    pub fn rounds(&self) -> usize {
        self.t
    }

    fn weight_for(&self, k: usize, l: f64) -> f64 {
        if k == 0 {
            return 1.0;
        }
        match self.config.weight_rule {
            WeightRule::KnownSigma { sigma2 } => compute_weight_known_sigma(sigma2, l),
            WeightRule::Adaptive => {
                let slot = &self.slots[k];
                // No accumulated weight yet: nothing is known about this
                // learner, so it gets full emphasis.
                if slot.capital_lambda == 0.0 {
                    1.0
                } else {
                    compute_weight(slot.delta, self.config.c, l, self.config.delta_floor)
                }
            }
        }
    }

    /// Processes one sample, writing the round into `log`.
    pub fn step_into(&mut self, sample: &Sample, log: &mut RoundLog) -> Result<()> {
        if sample.x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: sample.x.len(),
            });
        }
        let m = self.m();
        if log.lambdas.len() != m {
            *log = RoundLog::with_capacity(m);
        }
        self.t += 1;
        let t = self.t;
        log.t = t;

        for (y, slot) in log.learner_outputs.iter_mut().zip(&self.slots) {
            *y = slot.learner.predict(&sample.x)?;
        }
        let estimate = combiner_predict(&self.z, &log.learner_outputs)?;

        let sigma_m2 = self.config.sigma_m2;
        let mode = self.config.mode;
        let k_reuse = self.config.k_reuse;
        let mut l = 0.0;
        log.losses[0] = 0.0;
        for k in 0..m {
            let lambda = self.weight_for(k, l);
            let n = schedule_updates(mode, lambda, k_reuse, &mut self.rng);

            let slot = &mut self.slots[k];
            let apply = |learner: &mut WeakLearner, w: f64| {
                learner.weighted_step(sample, w).map_err(|e| match e {
                    Error::Numerical { detail, .. } => Error::Numerical {
                        k: k + 1,
                        t,
                        detail,
                    },
                    other => other,
                })
            };
            match mode {
                UpdateMode::Weighted => {
                    apply(&mut slot.learner, lambda)?;
                }
                _ => {
                    for _ in 0..n {
                        apply(&mut slot.learner, 1.0)?;
                    }
                }
            }
            slot.update_count += n;

            let y = log.learner_outputs[k];
            let e = sample.d - y;
            let (delta, cap) = update_delta(slot.delta, slot.capital_lambda, lambda, sample.d, y)?;
            slot.delta = delta;
            slot.capital_lambda = cap;
            l = update_loss(l, sigma_m2, e);

            log.lambdas[k] = lambda;
            log.learner_errors[k] = e;
            log.updates_applied[k] = n;
            log.losses[k + 1] = l;
        }

        let final_error = sample.d - estimate;
        combiner_update(
            &mut self.z,
            &log.learner_outputs,
            final_error,
            self.config.mu_z,
            self.config.combiner_eps,
        );
        log.estimate = estimate;
        log.final_error = final_error;
        Ok(())
    }

    pub fn run_round(&mut self, sample: &Sample) -> Result<RoundLog> {
        let mut log = RoundLog::with_capacity(self.m());
        self.step_into(sample, &mut log)?;
        Ok(log)
    }
}

/// Optional outputs of [`run_stream`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Record `lambda` for every learner every `n`-th round.
    pub trace_every: Option<usize>,
    /// Keep every [`RoundLog`] in the report.
    pub keep_logs: bool,
    /// Measure wall time. Off by default so reports are reproducible.
    pub record_timing: bool,
}

/// Runs a fresh ensemble over `stream` and aggregates the run metrics.
pub fn run_stream(config: &BoostConfig, stream: &[Sample], opts: &RunOptions) -> Result<RunReport> {
    let dim = stream_dim(stream)?;
    let started = opts.record_timing.then(Instant::now);
    let mut ens = EnsembleState::new(config.clone(), dim)?;
    let mut acc = RunAccumulator::new(config, stream.len(), opts);
    let mut log = RoundLog::with_capacity(config.m);
    for sample in stream {
        ens.step_into(sample, &mut log)?;
        acc.record(&log, &ens.slots);
    }
    let wall = started.map_or(0.0, |s| s.elapsed().as_secs_f64());
    Ok(acc.finish(&ens, wall))
}
