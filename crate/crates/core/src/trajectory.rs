//! Rollouts, logged batches, and importance weights.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::pairwise_sum;
use crate::policy::{Policy, PolicyParams, StepObservation};

/// Tolerance used when a batch is assembled in memory.
pub const LOG_PROB_TOLERANCE: f64 = 1e-9;

/// One trajectory gathered under the logging policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub steps: Vec<StepObservation>,
    /// Aggregated return of the trajectory.
    pub reward: f64,
    /// Auxiliary signal (e.g. a cost) used by constrained optimization.
    pub aux_signal: Option<f64>,
    /// Sum of per-step action log-probabilities under the logging parameters.
    pub log_prob_logging: f64,
}

impl Rollout {
    /// Builds a rollout, computing `log_prob_logging` from `policy`.
    pub fn from_policy(
        policy: &dyn Policy,
        logging_params: &PolicyParams,
        steps: Vec<StepObservation>,
        reward: f64,
        aux_signal: Option<f64>,
    ) -> Result<Self> {
        let log_prob_logging = policy.log_prob_rollout(logging_params, &steps)?;
        Ok(Self {
            steps,
            reward,
            aux_signal,
            log_prob_logging,
        })
    }
}

/// A set of rollouts gathered under a single logging parameter `θ₀`.
///
/// Immutable once built; construction checks every rollout against the
/// logging policy.
#[derive(Debug, Clone)]
pub struct LoggedBatch {
    policy: Arc<dyn Policy>,
    logging_params: PolicyParams,
    rollouts: Vec<Rollout>,
}

impl LoggedBatch {
    pub fn new(
        policy: Arc<dyn Policy>,
        logging_params: PolicyParams,
        rollouts: Vec<Rollout>,
    ) -> Result<Self> {
        Self::with_tolerance(policy, logging_params, rollouts, LOG_PROB_TOLERANCE)
    }

    /// Like [`LoggedBatch::new`] with a custom tolerance for the stored
    /// logging log-probabilities.
    pub fn with_tolerance(
        policy: Arc<dyn Policy>,
        logging_params: PolicyParams,
        rollouts: Vec<Rollout>,
        tolerance: f64,
    ) -> Result<Self> {
        if rollouts.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if logging_params.dim() != policy.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: policy.param_dim(),
                actual: logging_params.dim(),
            });
        }
        for (index, r) in rollouts.iter().enumerate() {
            if r.steps.is_empty() {
                return Err(Error::EmptyRollout { index });
            }
            if !r.reward.is_finite() || r.aux_signal.is_some_and(|s| !s.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "rollout {index} has a non-finite reward or auxiliary signal"
                )));
            }
            let recomputed = policy.log_prob_rollout(&logging_params, &r.steps)?;
            if !((recomputed - r.log_prob_logging).abs() <= tolerance) {
                return Err(Error::LogProbMismatch {
                    index,
                    stored: r.log_prob_logging,
                    recomputed,
                });
            }
        }
        Ok(Self {
            policy,
            logging_params,
            rollouts,
        })
    }

    pub fn policy(&self) -> &dyn Policy {
        self.policy.as_ref()
    }

    pub fn policy_arc(&self) -> Arc<dyn Policy> {
        Arc::clone(&self.policy)
    }

    pub fn logging_params(&self) -> &PolicyParams {
        &self.logging_params
    }

    pub fn rollouts(&self) -> &[Rollout] {
        &self.rollouts
    }

    pub fn len(&self) -> usize {
        self.rollouts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rollouts.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.rollouts.iter().map(|r| r.reward).collect()
    }

    /// Auxiliary signals, failing on the first rollout without one.
    pub fn aux_signals(&self) -> Result<Vec<f64>> {
        self.rollouts
            .iter()
            .enumerate()
            .map(|(index, r)| r.aux_signal.ok_or(Error::MissingAuxSignal { index }))
            .collect()
    }

    /// Mean of the logged rewards.
    pub fn mean_reward(&self) -> f64 {
        pairwise_sum(&self.rewards()) / self.len() as f64
    }
}

/// Converts a log importance ratio into a (possibly capped) weight.
///
/// With a cap the comparison happens in log space, so a ratio too large to
/// represent still yields the cap.
pub fn weight_from_log_ratio(index: usize, log_ratio: f64, cap: Option<f64>) -> Result<f64> {
    if log_ratio.is_nan() {
        return Err(Error::NonFiniteWeight { index, log_ratio });
    }
    let w = match cap {
        Some(c) if log_ratio >= c.ln() => c,
        _ => log_ratio.exp(),
    };
    if !w.is_finite() {
        return Err(Error::NonFiniteWeight { index, log_ratio });
    }
    Ok(w)
}

/// `min(cap, p(τ_i | θ) / p(τ_i | θ₀))`.
pub fn importance_weight(
    batch: &LoggedBatch,
    index: usize,
    eval_params: &PolicyParams,
    cap: Option<f64>,
) -> Result<f64> {
    let r = batch.rollouts.get(index).ok_or_else(|| {
        Error::InvalidInput(format!("rollout index {index} out of range ({})", batch.len()))
    })?;
    let lp = batch.policy.log_prob_rollout(eval_params, &r.steps)?;
    weight_from_log_ratio(index, lp - r.log_prob_logging, cap)
}

/// Importance weights of every rollout.
pub fn importance_weights(
    batch: &LoggedBatch,
    eval_params: &PolicyParams,
    cap: Option<f64>,
) -> Result<Vec<f64>> {
    (0..batch.len())
        .map(|i| importance_weight(batch, i, eval_params, cap))
        .collect()
}

/// `(Σw)² / Σw²`, between 1 and `N` for nonnegative weights.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::DegenerateWeights);
    }
    let sum = pairwise_sum(weights);
    if sum == 0.0 {
        return Err(Error::DegenerateWeights);
    }
    // Normalize first so large weights cannot overflow the squares.
    let max = weights.iter().cloned().fold(0.0, f64::max);
    let scaled: Vec<f64> = weights.iter().map(|w| w / max).collect();
    let s = pairwise_sum(&scaled);
    let sq: Vec<f64> = scaled.iter().map(|w| w * w).collect();
    Ok(s * s / pairwise_sum(&sq))
}
