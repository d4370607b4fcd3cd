use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a learner consumes its importance weight each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateMode {
    /// One update with the weight folded into the step.
    Weighted,
    /// `ceil(K * lambda)` unit-weight updates on the same sample.
    DataReuse,
    /// `Poisson(lambda)` unit-weight updates.
    OzaPoisson,
    /// One unit-weight update with probability `lambda`.
    Random,
}

impl UpdateMode {
    pub fn is_stochastic(self) -> bool {
        matches!(self, UpdateMode::OzaPoisson | UpdateMode::Random)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Sgd,
    Nm,
}

/// Which weight formula drives the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum WeightRule {
    /// `min{1, delta^(c l)}` with the running weighted MSE estimate `delta`.
    Adaptive,
    /// `min{1, (sigma2)^(l/2)}` with an a-priori guaranteed weighted MSE.
    KnownSigma { sigma2: f64 },
}

/// Every tunable of the boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    /// Number of weak learners.
    pub m: usize,
    /// Modified desired MSE used in the loss ladder.
    pub sigma_m2: f64,
    /// Dependence parameter.
    pub c: f64,
    /// Data-reuse multiplier.
    pub k_reuse: u32,
    /// SGD step size.
    pub mu: f64,
    /// Combiner step size; 0 freezes the combiner at uniform weights.
    pub mu_z: f64,
    /// RLS forgetting factor.
    pub beta: f64,
    /// RLS regularizer: the inverse correlation starts at `I / v`.
    pub v: f64,
    pub mode: UpdateMode,
    pub learner: LearnerKind,
    pub seed: u64,
    /// Lower clamp for the base of the adaptive weight.
    pub delta_floor: f64,
    pub weight_rule: WeightRule,
    /// The combiner skips its update when `|y|^2` falls below this.
    pub combiner_eps: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            m: 20,
            sigma_m2: 0.02,
            c: 1.0,
            k_reuse: 5,
            mu: 0.1,
            mu_z: 0.001,
            beta: 0.9999,
            v: 0.01,
            mode: UpdateMode::Weighted,
            learner: LearnerKind::Sgd,
            seed: 0,
            delta_floor: 1e-6,
            weight_rule: WeightRule::Adaptive,
            combiner_eps: 1e-12,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        fn finite(name: &'static str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be finite, got {v}")))
            }
        }
        for (name, v) in [
            ("sigma_m2", self.sigma_m2),
            ("c", self.c),
            ("mu", self.mu),
            ("mu_z", self.mu_z),
            ("beta", self.beta),
            ("v", self.v),
            ("delta_floor", self.delta_floor),
            ("combiner_eps", self.combiner_eps),
        ] {
            finite(name, v)?;
        }
        if self.m == 0 {
            return Err(Error::param("m", "need at least one learner"));
        }
        if self.sigma_m2 < 0.0 {
            return Err(Error::param("sigma_m2", "must be nonnegative"));
        }
        if self.c < 0.0 {
            return Err(Error::param("c", "must be nonnegative"));
        }
        if self.k_reuse == 0 {
            return Err(Error::param("k_reuse", "must be at least 1"));
        }
        if self.mu <= 0.0 {
            return Err(Error::param("mu", "must be positive"));
        }
        if self.mu_z < 0.0 {
            return Err(Error::param("mu_z", "must be nonnegative"));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::param("beta", "must lie in (0, 1]"));
        }
        if self.v <= 0.0 {
            return Err(Error::param("v", "must be positive"));
        }
        if !(self.delta_floor > 0.0 && self.delta_floor < 1.0) {
            return Err(Error::param("delta_floor", "must lie in (0, 1)"));
        }
        if self.combiner_eps < 0.0 {
            return Err(Error::param("combiner_eps", "must be nonnegative"));
        }
        if let WeightRule::KnownSigma { sigma2 } = self.weight_rule {
            if !(sigma2 > 0.0 && sigma2 <= 1.0) {
                return Err(Error::param("sigma2", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

/// Modified desired MSE `(sigma_d2 - kappa) / (1 - kappa)`.
///
/// Requires `0 <= kappa < sigma_d2 <= 1`.
pub fn sigma_m_from_target(sigma_d2: f64, kappa: f64) -> Result<f64> {
    if !sigma_d2.is_finite() || !kappa.is_finite() {
        return Err(Error::param("sigma_d2/kappa", "must be finite"));
    }
    if kappa < 0.0 {
        return Err(Error::param("kappa", "must be nonnegative"));
    }
    if kappa >= 1.0 {
        return Err(Error::param("kappa", format!("{kappa} is not below 1")));
    }
    if kappa >= sigma_d2 {
        return Err(Error::param(
            "kappa",
            format!("{kappa} is not below sigma_d2 = {sigma_d2}"),
        ));
    }
    if sigma_d2 > 1.0 {
        return Err(Error::param("sigma_d2", "must not exceed 1"));
    }
    Ok((sigma_d2 - kappa) / (1.0 - kappa))
}
