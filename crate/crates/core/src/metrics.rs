//! Error accumulation, run reports and the theory diagnostics: the weighted
//! MSE, the uniform-combination certificate over run logs, the closed-form
//! bound on the number of learners, the expected-weight bound and update
//! accounting.

use serde::{Deserialize, Serialize};

use crate::boosting::{EnsembleState, LearnerSlot, RoundLog, RunOptions};
use crate::config::{BoostConfig, LearnerKind, UpdateMode};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPoint {
    pub t: usize,
    /// 1-based learner index.
    pub k: usize,
    pub lambda: f64,
}

/// Aggregated outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub t_len: usize,
    pub m: usize,
    pub mode: UpdateMode,
    pub learner: LearnerKind,
    pub k_reuse: u32,
    /// `ase_curve[t - 1]` is the accumulated squared final error after `t`
    /// rounds.
    pub ase_curve: Vec<f64>,
    pub final_mse: f64,
    pub lambda_trace: Option<Vec<LambdaPoint>>,
    pub mean_lambda: Vec<f64>,
    pub sum_lambda: Vec<f64>,
    pub sum_lambda_sq: Vec<f64>,
    pub update_counts: Vec<u64>,
    /// `sum_t ceil(K lambda)` per learner, whatever the mode.
    pub reuse_counts: Vec<u64>,
    /// Weighted MSE `sum lambda e^2 / (4 sum lambda)` per learner.
    pub wmse: Vec<f64>,
    /// Time-averaged weighted MSE estimate `delta` per learner.
    pub mean_delta: Vec<f64>,
    /// Mean squared pre-update error per learner.
    pub learner_mse: Vec<f64>,
    pub final_coefficients: Vec<Vec<f64>>,
    pub final_z: Vec<f64>,
    pub wall_time_s: f64,
    pub logs: Option<Vec<RoundLog>>,
}

impl RunReport {
    pub fn ase(&self) -> f64 {
        self.ase_curve.last().copied().unwrap_or(0.0)
    }

    pub fn total_updates(&self) -> u64 {
        self.update_counts.iter().sum()
    }
}

pub(crate) struct RunAccumulator {
    k_reuse: u32,
    mode: UpdateMode,
    learner: LearnerKind,
    trace_every: Option<usize>,
    ase: f64,
    ase_curve: Vec<f64>,
    trace: Option<Vec<LambdaPoint>>,
    sum_lambda: Vec<f64>,
    sum_lambda_sq: Vec<f64>,
    sum_lambda_e2: Vec<f64>,
    sum_e2: Vec<f64>,
    sum_delta: Vec<f64>,
    reuse: Vec<u64>,
    logs: Option<Vec<RoundLog>>,
}

impl RunAccumulator {
    pub(crate) fn new(config: &BoostConfig, t_len: usize, opts: &RunOptions) -> Self {
        let m = config.m;
        Self {
            k_reuse: config.k_reuse,
            mode: config.mode,
            learner: config.learner,
            trace_every: opts.trace_every.filter(|&n| n > 0),
            ase: 0.0,
            ase_curve: Vec::with_capacity(t_len),
            trace: opts.trace_every.filter(|&n| n > 0).map(|_| Vec::new()),
            sum_lambda: vec![0.0; m],
            sum_lambda_sq: vec![0.0; m],
            sum_lambda_e2: vec![0.0; m],
            sum_e2: vec![0.0; m],
            sum_delta: vec![0.0; m],
            reuse: vec![0; m],
            logs: opts.keep_logs.then(|| Vec::with_capacity(t_len)),
        }
    }

    pub(crate) fn record(&mut self, log: &RoundLog, slots: &[LearnerSlot]) {
        self.ase += log.final_error * log.final_error;
        self.ase_curve.push(self.ase);
        let kf = f64::from(self.k_reuse);
        for (k, (&lambda, &e)) in log.lambdas.iter().zip(&log.learner_errors).enumerate() {
            self.sum_lambda[k] += lambda;
            self.sum_lambda_sq[k] += lambda * lambda;
            self.sum_lambda_e2[k] += lambda * e * e;
            self.sum_e2[k] += e * e;
            self.sum_delta[k] += slots[k].delta;
            self.reuse[k] += (kf * lambda).ceil().max(1.0) as u64;
        }
        if let (Some(every), Some(trace)) = (self.trace_every, self.trace.as_mut()) {
            if log.t.is_multiple_of(every) {
                trace.extend(
                    log.lambdas
                        .iter()
                        .enumerate()
                        .map(|(k, &lambda)| LambdaPoint {
                            t: log.t,
                            k: k + 1,
                            lambda,
                        }),
                );
            }
        }
        if let Some(logs) = self.logs.as_mut() {
            logs.push(log.clone());
        }
    }

    pub(crate) fn finish(self, ens: &EnsembleState, wall_time_s: f64) -> RunReport {
        let t = self.ase_curve.len();
        let tf = t as f64;
        let per_t = |v: &[f64]| v.iter().map(|x| x / tf).collect::<Vec<_>>();
        RunReport {
            t_len: t,
            m: ens.m(),
            mode: self.mode,
            learner: self.learner,
            k_reuse: self.k_reuse,
            final_mse: self.ase / tf,
            mean_lambda: per_t(&self.sum_lambda),
            mean_delta: per_t(&self.sum_delta),
            learner_mse: per_t(&self.sum_e2),
            wmse: self
                .sum_lambda_e2
                .iter()
                .zip(&self.sum_lambda)
                .map(|(num, den)| num / (4.0 * den))
                .collect(),
            ase_curve: self.ase_curve,
            lambda_trace: self.trace,
            sum_lambda: self.sum_lambda,
            sum_lambda_sq: self.sum_lambda_sq,
            update_counts: ens.slots.iter().map(|s| s.update_count).collect(),
            reuse_counts: self.reuse,
            final_coefficients: ens
                .slots
                .iter()
                .map(|s| s.learner.coefficients().to_vec())
                .collect(),
            final_z: ens.z.clone(),
            wall_time_s,
            logs: self.logs,
        }
    }
}

/// Prefix sums of squared errors.
pub fn ase_curve(errors: &[f64]) -> Result<Vec<f64>> {
    if errors.is_empty() {
        return Err(Error::EmptyStream);
    }
    let mut acc = 0.0;
    Ok(errors
        .iter()
        .map(|e| {
            acc += e * e;
            acc
        })
        .collect())
}

/// `sum lambda e^2 / (4 sum lambda)`.
pub fn weighted_mse(lambdas: &[f64], errors: &[f64]) -> Result<f64> {
    if lambdas.len() != errors.len() {
        return Err(Error::DimensionMismatch {
            expected: lambdas.len(),
            got: errors.len(),
        });
    }
    let total: f64 = lambdas.iter().sum();
    if !(total > 0.0) {
        return Err(Error::param("lambdas", "total weight must be positive"));
    }
    let num: f64 = lambdas.iter().zip(errors).map(|(l, e)| l * e * e).sum();
    Ok(num / (4.0 * total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CertificateStatus {
    /// The weight implication held, the weight premises held, and the
    /// observed MSE is within the implied bound.
    Verified,
    /// The implication held but the weight premises did not; the MSE bound
    /// is vacuous for this run.
    PremisesFailed,
    /// A round had `e^2 > sigma_m2` yet `lambda^(M+1) != 1`.
    ImplicationFailed,
}

/// Outcome of checking the uniform-combination MSE argument on a run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Certificate {
    pub rounds: usize,
    pub m_used: usize,
    /// Rounds (1-based `t`) where the implication failed.
    pub violations: Vec<usize>,
    /// `|{t : e_t^2 > sigma_m2}| / T` for the uniform combination.
    pub exceed_fraction: f64,
    /// `sum_t lambda^(M+1) / T`.
    pub next_mean_lambda: f64,
    /// `(1 - kappa) sigma_m2 + kappa`.
    pub implied_bound: f64,
    /// MSE of the uniform combination of the first `M` learners.
    pub observed_mse: f64,
    /// `sum_t lambda^(k) >= kappa T` for every `k <= M`.
    pub premises_held: bool,
    /// `sum_t lambda^(M+1) < kappa T`.
    pub next_below_kappa: bool,
    pub status: CertificateStatus,
}

/// Replays the uniform-combination argument over recorded rounds.
///
/// `m_used` is the number of leading learners averaged; the learner after
/// them must be present in the logs.
pub fn lemma1_certificate(
    logs: &[RoundLog],
    m_used: usize,
    kappa: f64,
    sigma_m2: f64,
) -> Result<Lemma1Certificate> {
    let first = logs.first().ok_or(Error::EmptyStream)?;
    let m = first.lambdas.len();
    if m_used == 0 {
        return Err(Error::param("M", "must be at least 1"));
    }
    if m_used >= m {
        return Err(Error::param(
            "M",
            format!("M = {m_used} needs learner M + 1 but only {m} learners were logged"),
        ));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::param("kappa", "must lie in (0, 1)"));
    }
    let t_len = logs.len();
    let tf = t_len as f64;
    let mut violations = Vec::new();
    let mut exceed = 0usize;
    let mut sum_e2 = 0.0;
    let mut lambda_sums = vec![0.0; m_used + 1];
    for log in logs {
        if log.lambdas.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: log.lambdas.len(),
            });
        }
        let e = log.learner_errors[..m_used].iter().sum::<f64>() / m_used as f64;
        let e2 = e * e;
        sum_e2 += e2;
        if e2 > sigma_m2 {
            exceed += 1;
            if log.lambdas[m_used] != 1.0 {
                violations.push(log.t);
            }
        }
        for (acc, &l) in lambda_sums.iter_mut().zip(&log.lambdas) {
            *acc += l;
        }
    }
    let premises_held = lambda_sums[..m_used].iter().all(|&s| s >= kappa * tf);
    let next_below_kappa = lambda_sums[m_used] < kappa * tf;
    let implied_bound = (1.0 - kappa) * sigma_m2 + kappa;
    let observed_mse = sum_e2 / tf;
    let status = if !violations.is_empty() {
        CertificateStatus::ImplicationFailed
    } else if premises_held && next_below_kappa && observed_mse <= implied_bound {
        CertificateStatus::Verified
    } else {
        CertificateStatus::PremisesFailed
    };
    Ok(Lemma1Certificate {
        rounds: t_len,
        m_used,
        violations,
        exceed_fraction: exceed as f64 / tf,
        next_mean_lambda: lambda_sums[m_used] / tf,
        implied_bound,
        observed_mse,
        premises_held,
        next_below_kappa,
        status,
    })
}

/// Upper bound on the number of learners needed, written in terms of
/// `sigma` itself:
/// `1 / ((kappa sigma ln(1/sigma)) (1 - 4 sigma^2 + sigma^4 sigma_m2))`.
pub fn lemma2_learner_bound_raw(kappa: f64, sigma: f64, sigma_m2: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::param("kappa", "must be positive"));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::param(
            "sigma",
            format!("{sigma} is outside (0, 1); sigma ln(1/sigma) would not be positive"),
        ));
    }
    let s2 = sigma * sigma;
    let factor = 1.0 - 4.0 * s2 + s2 * s2 * sigma_m2;
    let denom = kappa * sigma * (1.0 / sigma).ln() * factor;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::param(
            "sigma2",
            format!("1 - 4 sigma^2 + sigma^4 sigma_m2 = {factor:e}; the bound needs it positive"),
        ));
    }
    Ok(1.0 / denom)
}

/// Learner-count bound with `sigma = sqrt(sigma2)`, where `sigma2` is the
/// guaranteed weighted MSE.
pub fn lemma2_learner_bound(kappa: f64, sigma2: f64, sigma_m2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::param("sigma2", "must be positive"));
    }
    lemma2_learner_bound_raw(kappa, sigma2.sqrt(), sigma_m2)
}

/// `(gamma^(-2 sigma_m2) (1 + 2 zeta2 ln gamma))^((1 - k) / 2)`.
pub fn theorem2_lambda_bound(gamma: f64, zeta2: f64, sigma_m2: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::param("k", "learner index is 1-based"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::param("gamma", format!("{gamma} is outside (0, 1)")));
    }
    let inner = 1.0 + 2.0 * zeta2 * gamma.ln();
    if !(inner > 0.0) {
        return Err(Error::param(
            "zeta2",
            format!("1 + 2 zeta2 ln gamma = {inner:e} is not positive"),
        ));
    }
    let a = gamma.powf(-2.0 * sigma_m2) * inner;
    Ok(a.powf((1.0 - k as f64) / 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub mode: UpdateMode,
    pub m: usize,
    pub t_len: usize,
    /// Cost of one learner update in multiply-adds: `r^2` for RLS, `r` for
    /// SGD.
    pub cost_per_update: usize,
    pub observed: Vec<u64>,
    pub observed_total: u64,
    /// Count every learner would see in weighted mode, `m T`.
    pub weighted_total: u64,
    /// `sum ceil(K lambda)` over learners and rounds.
    pub data_reuse_total: u64,
    /// `sum lambda`, the expected count for the random and Poisson modes.
    pub expected_random_total: f64,
    /// Standard deviation of the random-mode count, `sqrt(sum lambda (1 - lambda))`.
    pub random_total_std: f64,
    /// The count predicted for the run's own mode.
    pub predicted_total: f64,
    /// Per-learner weight bounds estimated from the run (`gamma` = mean
    /// delta, `zeta2` = learner MSE); `None` where the bound is undefined.
    pub lambda_tilde: Vec<Option<f64>>,
    /// `T sum_k lambda_tilde^(k)` (times `K` in data-reuse mode), when every
    /// per-learner bound is defined.
    pub estimated_update_bound: Option<f64>,
}

pub fn complexity_report(report: &RunReport, r: usize, sigma_m2: f64) -> ComplexityReport {
    let t_len = report.t_len as u64;
    let m = report.m as u64;
    let weighted_total = m * t_len;
    let data_reuse_total: u64 = report.reuse_counts.iter().sum();
    let expected_random_total: f64 = report.sum_lambda.iter().sum();
    let var: f64 = report
        .sum_lambda
        .iter()
        .zip(&report.sum_lambda_sq)
        .map(|(s, s2)| s - s2)
        .sum();
    let predicted_total = match report.mode {
        UpdateMode::Weighted => weighted_total as f64,
        UpdateMode::DataReuse => data_reuse_total as f64,
        UpdateMode::Random | UpdateMode::OzaPoisson => expected_random_total,
    };
    let lambda_tilde: Vec<Option<f64>> = (0..report.m)
        .map(|k| {
            theorem2_lambda_bound(report.mean_delta[k], report.learner_mse[k], sigma_m2, k + 1).ok()
        })
        .collect();
    let estimated_update_bound = lambda_tilde
        .iter()
        .copied()
        .collect::<Option<Vec<f64>>>()
        .map(|v| {
            let per_round: f64 = v.iter().sum();
            let mult = match report.mode {
                UpdateMode::DataReuse => f64::from(report.k_reuse),
                _ => 1.0,
            };
            report.t_len as f64 * per_round * mult
        });
    ComplexityReport {
        mode: report.mode,
        m: report.m,
        t_len: report.t_len,
        cost_per_update: match report.learner {
            LearnerKind::Nm => r * r,
            LearnerKind::Sgd => r,
        },
        observed: report.update_counts.clone(),
        observed_total: report.total_updates(),
        weighted_total,
        data_reuse_total,
        expected_random_total,
        random_total_std: var.max(0.0).sqrt(),
        predicted_total,
        lambda_tilde,
        estimated_update_bound,
    }
}
