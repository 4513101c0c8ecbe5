//! Importance-weighted expected-reward estimator, reward shift and control
//! variates.
//!
//! With weights `w_i`, reward shift `β` and control variate `b` the estimator is
//!
//! ```text
//! Ĵ(θ) = (1/N) Σ_i w_i(θ)·(R_i + β − b) + b − β
//! ```
//!
//! Since `E[w] = 1` under the logging distribution, neither `β` nor `b` biases
//! the estimate. They only change which effective rewards `R_i + β − b` the
//! surrogate bounds see.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean_and_variance, pairwise_sum};
use crate::policy::PolicyParams;
use crate::trajectory::{importance_weights, LoggedBatch};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub weight_cap: Option<f64>,
    pub reward_shift: f64,
    pub control_variate: f64,
    /// Fraction of the variance-minimizing control variate used when it is
    /// recomputed by the optimizer.
    pub cv_fraction: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            weight_cap: None,
            reward_shift: 0.0,
            control_variate: 0.0,
            cv_fraction: 0.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(cap) = self.weight_cap {
            if !(cap > 0.0) || !cap.is_finite() {
                return Err(Error::Config(format!("weight cap must be positive, got {cap}")));
            }
        }
        if !(0.0..=1.0).contains(&self.cv_fraction) {
            return Err(Error::Config(format!(
                "cv_fraction must lie in [0, 1], got {}",
                self.cv_fraction
            )));
        }
        if !self.reward_shift.is_finite() || !self.control_variate.is_finite() {
            return Err(Error::Config("reward shift and control variate must be finite".into()));
        }
        Ok(())
    }

    /// Constant added back outside the weighted sum.
    pub fn offset(&self) -> f64 {
        self.control_variate - self.reward_shift
    }

    pub fn effective_reward(&self, reward: f64) -> f64 {
        reward + self.reward_shift - self.control_variate
    }
}

/// Estimator value from precomputed weights.
pub fn j_hat_from_weights(rewards: &[f64], weights: &[f64], config: &EstimatorConfig) -> f64 {
    let terms: Vec<f64> = rewards
        .iter()
        .zip(weights)
        .map(|(r, w)| w * config.effective_reward(*r))
        .collect();
    pairwise_sum(&terms) / rewards.len() as f64 + config.offset()
}

/// Importance-sampling estimate of the expected reward at `eval_params`.
pub fn j_hat(batch: &LoggedBatch, eval_params: &PolicyParams, config: &EstimatorConfig) -> Result<f64> {
    let weights = importance_weights(batch, eval_params, config.weight_cap)?;
    Ok(j_hat_from_weights(&batch.rewards(), &weights, config))
}

/// Variance-minimizing control variate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlVariate {
    pub value: f64,
    /// Set when the weights have no spread, in which case `value` is 0.
    pub degenerate: bool,
}

/// `b* = Cov(w·R, w) / Var(w)` from weights and rewards.
pub fn optimal_control_variate_from(rewards: &[f64], weights: &[f64]) -> ControlVariate {
    let degenerate = ControlVariate {
        value: 0.0,
        degenerate: true,
    };
    let n = weights.len();
    if n < 2 {
        return degenerate;
    }
    let (mean_w, var_w) = mean_and_variance(weights);
    if !(var_w > 1e-14 * mean_w * mean_w) {
        return degenerate;
    }
    let products: Vec<f64> = weights.iter().zip(rewards).map(|(w, r)| w * r).collect();
    let mean_p = pairwise_sum(&products) / n as f64;
    let cross: Vec<f64> = products
        .iter()
        .zip(weights)
        .map(|(p, w)| (p - mean_p) * (w - mean_w))
        .collect();
    let cov = pairwise_sum(&cross) / (n - 1) as f64;
    ControlVariate {
        value: cov / var_w,
        degenerate: false,
    }
}

/// Control variate minimizing the sample variance of `w_i·R_i − b·(w_i − 1)`,
/// computed from the (capped) weights at `eval_params`.
pub fn optimal_control_variate(
    batch: &LoggedBatch,
    eval_params: &PolicyParams,
    weight_cap: Option<f64>,
) -> Result<ControlVariate> {
    let weights = importance_weights(batch, eval_params, weight_cap)?;
    Ok(optimal_control_variate_from(&batch.rewards(), &weights))
}

/// Smallest `β ≥ 0` making every `R_i + β − b` nonnegative, as evaluated by
/// [`EstimatorConfig::effective_reward`] in floating point.
pub fn shift_for_positivity(batch: &LoggedBatch, current_b: f64) -> f64 {
    let rewards = batch.rewards();
    let min = rewards
        .iter()
        .map(|r| r - current_b)
        .fold(f64::INFINITY, f64::min);
    let mut beta = (-min).max(0.0);
    let negative = |beta: f64| {
        let cfg = EstimatorConfig {
            reward_shift: beta,
            control_variate: current_b,
            ..Default::default()
        };
        rewards.iter().any(|&r| cfg.effective_reward(r) < 0.0)
    };
    // Rounding in `R + β − b` can leave a residue of a few ulps.
    while negative(beta) {
        beta = beta.next_up();
    }
    beta
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::policy::{BernoulliLogistic, Policy, StepObservation};
    use crate::trajectory::Rollout;

    #[test]
    fn shift_survives_rounding() {
        let pol: Arc<dyn Policy> = Arc::new(BernoulliLogistic::new(1));
        let th0 = PolicyParams::zeros(1);
        let mut state = 0.1f64;
        for _ in 0..200 {
            state = (state * 7.3 + 0.37).fract();
            let rewards = [state * 3.0 - 2.0, 1.7, -0.3 * state];
            let b = state - 0.5;
            let rollouts = rewards
                .iter()
                .map(|&r| {
                    Rollout::from_policy(pol.as_ref(), &th0, vec![StepObservation::new(vec![1.0], 1)], r, None)
                        .unwrap()
                })
                .collect();
            let batch = LoggedBatch::new(pol.clone(), th0.clone(), rollouts).unwrap();
            let beta = shift_for_positivity(&batch, b);
            let cfg = EstimatorConfig { reward_shift: beta, control_variate: b, ..Default::default() };
            assert!(rewards.iter().all(|&r| cfg.effective_reward(r) >= 0.0));
        }
    }

    fn one_step_batch(rewards: &[f64], actions: &[usize]) -> LoggedBatch {
        let pol: Arc<dyn Policy> = Arc::new(BernoulliLogistic::new(1));
        let th0 = PolicyParams::zeros(1);
        let rollouts = rewards
            .iter()
            .zip(actions)
            .map(|(r, a)| {
                Rollout::from_policy(
                    pol.as_ref(),
                    &th0,
                    vec![StepObservation::new(vec![1.0], *a)],
                    *r,
                    None,
                )
                .unwrap()
            })
            .collect();
        LoggedBatch::new(pol, th0, rollouts).unwrap()
    }

    #[test]
    fn at_logging_params_estimate_is_mean_reward_for_any_b() {
        let b = one_step_batch(&[1.0, 4.0, -2.0], &[1, 0, 1]);
        let th0 = b.logging_params().clone();
        let plain = j_hat(&b, &th0, &EstimatorConfig::default()).unwrap();
        assert!((plain - 1.0).abs() < 1e-15);
        for cv in [-3.0, 0.5, 17.0] {
            let cfg = EstimatorConfig {
                control_variate: cv,
                ..Default::default()
            };
            assert!((j_hat(&b, &th0, &cfg).unwrap() - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_weighted_mean() {
        // Three rollouts with stored logging log-probabilities and a known
        // evaluation policy; weights are σ(θ)/σ(0) for a=1 and σ(−θ)/σ(0) for a=0.
        let b = one_step_batch(&[2.0, -1.0, 5.0], &[1, 0, 1]);
        let th = PolicyParams::new(vec![1.0]).unwrap();
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        let w = [s1 / 0.5, (1.0 - s1) / 0.5, s1 / 0.5];
        let expected = (2.0 * w[0] - 1.0 * w[1] + 5.0 * w[2]) / 3.0;
        let got = j_hat(&b, &th, &EstimatorConfig::default()).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn control_variate_two_point_example() {
        let cv = optimal_control_variate_from(&[0.0, 3.0], &[1.0, 2.0]);
        assert!(!cv.degenerate);
        assert!((cv.value - 6.0).abs() < 1e-12);
        let flat = optimal_control_variate_from(&[0.0, 3.0, 9.0], &[1.3, 1.3, 1.3]);
        assert!(flat.degenerate);
        assert_eq!(flat.value, 0.0);
        assert!(optimal_control_variate_from(&[1.0], &[2.0]).degenerate);
    }

    #[test]
    fn shift_examples() {
        assert_eq!(shift_for_positivity(&one_step_batch(&[0.0, 3.0], &[1, 0]), 0.0), 0.0);
        assert_eq!(shift_for_positivity(&one_step_batch(&[5.0, -2.0], &[1, 0]), 0.0), 2.0);
        assert_eq!(
            shift_for_positivity(&one_step_batch(&[1.0, 2.0, 3.0], &[1, 0, 1]), 2.0),
            1.0
        );
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let bad_cap = EstimatorConfig {
            weight_cap: Some(0.0),
            ..Default::default()
        };
        assert!(bad_cap.validate().is_err());
        let bad_cv = EstimatorConfig {
            cv_fraction: 1.5,
            ..Default::default()
        };
        assert!(bad_cv.validate().is_err());
    }
}
