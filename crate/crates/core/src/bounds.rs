//! Concave surrogates of the importance-sampling estimator.
//!
//! Every surrogate is anchored at parameters `ν` and has the form
//!
//! ```text
//! Ĵ_ν(θ) = (1/N) Σ_i R'_i · w_i^ν · z_i(θ) + (b − β)
//! ```
//!
//! where `R'_i = R_i + β − b` is the effective reward and
//! `w_i^ν = min(cap, p(τ_i|ν) / p(τ_i|θ₀))`. For `R'_i ≥ 0` the factor is the
//! log lower bound `z_i = 1 + log p(τ_i|θ) − log p(τ_i|ν)`, which is concave
//! whenever the policy is log-concave. For `R'_i < 0` the mixed surrogate
//! uses the convex upper bound `z_i = exp[(θ − ν)ᵀ ∇log p(τ_i|ν)]`, so the
//! product with a negative reward is again concave. Both factors equal 1
//! with matching gradients at `θ = ν`, which makes the surrogate tangent to
//! the estimator there.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorConfig;
use crate::numeric::{pairwise_reduce, pairwise_sum};
use crate::policy::PolicyParams;
use crate::trajectory::{weight_from_log_ratio, LoggedBatch};

/// Largest exponent accepted in the upper-bound branch.
pub const EXPONENT_LIMIT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchRule {
    /// Log lower bound only; every effective reward must be nonnegative.
    LowerOnly,
    /// Log lower bound on nonnegative effective rewards, exponential upper
    /// bound on negative ones.
    #[default]
    Mixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSpec {
    pub anchor: PolicyParams,
    pub estimator: EstimatorConfig,
    pub branch_rule: BranchRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

impl SurrogateEval {
    fn zeros(d: usize) -> Self {
        Self {
            value: 0.0,
            gradient: DVector::zeros(d),
            hessian: DMatrix::zeros(d, d),
        }
    }

    fn add(mut self, other: Self) -> Self {
        self.value += other.value;
        self.gradient += other.gradient;
        self.hessian += other.hessian;
        self
    }
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Per-rollout quantities evaluated once at the anchor.
#[derive(Debug, Clone)]
pub struct AnchorTerms {
    anchor: PolicyParams,
    weights: Vec<f64>,
    log_probs: Vec<f64>,
    grads: Vec<DVector<f64>>,
}

impl AnchorTerms {
    pub fn new(batch: &LoggedBatch, anchor: &PolicyParams, weight_cap: Option<f64>) -> Result<Self> {
        let policy = batch.policy();
        let n = batch.len();
        let mut weights = Vec::with_capacity(n);
        let mut log_probs = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        for (i, r) in batch.rollouts().iter().enumerate() {
            let (lp, g, _) = policy.rollout_derivatives(anchor, &r.steps, false)?;
            weights.push(weight_from_log_ratio(i, lp - r.log_prob_logging, weight_cap)?);
            log_probs.push(lp);
            grads.push(g);
        }
        Ok(Self {
            anchor: anchor.clone(),
            weights,
            log_probs,
            grads,
        })
    }

    pub fn anchor(&self) -> &PolicyParams {
        &self.anchor
    }

    /// Capped importance weights `w_i^ν`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∇log p(τ_i | ν)`.
    pub fn anchor_gradient(&self, index: usize) -> &DVector<f64> {
        &self.grads[index]
    }

    /// `exp[(θ − ν)ᵀ ∇log p(τ_i|ν)]`, the upper bound on `p(τ_i|θ)/p(τ_i|ν)`.
    pub fn upper_factor(&self, index: usize, theta: &PolicyParams) -> Result<f64> {
        let exponent = (theta.as_vector() - self.anchor.as_vector()).dot(&self.grads[index]);
        if !(exponent <= EXPONENT_LIMIT) {
            return Err(Error::ExponentOverflow { index, exponent });
        }
        Ok(exponent.exp())
    }
}

/// A concave surrogate anchored at `ν`, ready to be evaluated at any `θ`.
#[derive(Debug, Clone)]
pub struct Surrogate<'a> {
    batch: &'a LoggedBatch,
    terms: Arc<AnchorTerms>,
    signal: Vec<f64>,
    upper: Vec<bool>,
    offset: f64,
}

impl<'a> Surrogate<'a> {
    /// Builds the surrogate described by `spec`.
    pub fn new(batch: &'a LoggedBatch, spec: &SurrogateSpec) -> Result<Self> {
        spec.estimator.validate()?;
        let terms = Arc::new(AnchorTerms::new(batch, &spec.anchor, spec.estimator.weight_cap)?);
        let signal = batch
            .rollouts()
            .iter()
            .map(|r| spec.estimator.effective_reward(r.reward))
            .collect();
        Self::from_signal(batch, terms, signal, spec.estimator.offset(), spec.branch_rule)
    }

    /// Surrogate of `(1/N) Σ w_i(θ)·signal_i + offset` using precomputed
    /// anchor terms. The sign of each signal value picks its branch.
    pub fn from_signal(
        batch: &'a LoggedBatch,
        terms: Arc<AnchorTerms>,
        signal: Vec<f64>,
        offset: f64,
        rule: BranchRule,
    ) -> Result<Self> {
        if signal.len() != batch.len() {
            return Err(Error::DimensionMismatch {
                expected: batch.len(),
                actual: signal.len(),
            });
        }
        if let Some(index) = signal.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("rollout {index}: non-finite signal")));
        }
        let upper = match rule {
            BranchRule::LowerOnly => {
                if let Some(index) = signal.iter().position(|v| *v < 0.0) {
                    return Err(Error::NegativeReward {
                        index,
                        reward: signal[index],
                    });
                }
                vec![false; signal.len()]
            }
            BranchRule::Mixed => signal.iter().map(|v| *v < 0.0).collect(),
        };
        Ok(Self {
            batch,
            terms,
            signal,
            upper,
            offset,
        })
    }

    pub fn anchor(&self) -> &PolicyParams {
        self.terms.anchor()
    }

    pub fn anchor_terms(&self) -> &Arc<AnchorTerms> {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.terms.anchor.dim()
    }

    /// Whether rollout `index` uses the exponential upper-bound branch.
    pub fn uses_upper_branch(&self, index: usize) -> bool {
        self.upper[index]
    }

    /// `z_i(θ)` for every rollout.
    pub fn factors(&self, theta: &PolicyParams) -> Result<Vec<f64>> {
        let policy = self.batch.policy();
        self.batch
            .rollouts()
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if self.upper[i] {
                    self.terms.upper_factor(i, theta)
                } else {
                    let lp = policy.log_prob_rollout(theta, &r.steps)?;
                    Ok(1.0 + (lp - self.terms.log_probs[i]))
                }
            })
            .collect()
    }

    /// `(1/N) Σ values_i · w_i^ν · z_i(θ)` with this surrogate's branches.
    pub fn weighted_mean(&self, values: &[f64], theta: &PolicyParams) -> Result<f64> {
        let z = self.factors(theta)?;
        let terms: Vec<f64> = values
            .iter()
            .zip(&self.terms.weights)
            .zip(&z)
            .map(|((v, w), z)| v * w * z)
            .collect();
        Ok(pairwise_sum(&terms) / self.batch.len() as f64)
    }

    pub fn value(&self, theta: &PolicyParams) -> Result<f64> {
        Ok(self.weighted_mean(&self.signal, theta)? + self.offset)
    }

    /// Value, gradient and Hessian at `theta`.
    pub fn evaluate(&self, theta: &PolicyParams) -> Result<SurrogateEval> {
        let policy = self.batch.policy();
        let d = self.dim();
        let n = self.batch.len() as f64;
        let mut per_rollout = Vec::with_capacity(self.batch.len());
        for (i, r) in self.batch.rollouts().iter().enumerate() {
            let coeff = self.signal[i] * self.terms.weights[i];
            if coeff == 0.0 {
                per_rollout.push(SurrogateEval::zeros(d));
                continue;
            }
            let eval = if self.upper[i] {
                // c·z·g and c·z·g gᵀ, a rank-one concave term since c < 0.
                let z = self.terms.upper_factor(i, theta)?;
                let g = &self.terms.grads[i];
                let scale = coeff * z;
                SurrogateEval {
                    value: scale,
                    gradient: g * scale,
                    hessian: (g * g.transpose()) * scale,
                }
            } else {
                let (lp, g, h) = policy.rollout_derivatives(theta, &r.steps, true)?;
                let h = h.expect("hessian requested");
                SurrogateEval {
                    value: coeff * (1.0 + (lp - self.terms.log_probs[i])),
                    gradient: g * coeff,
                    hessian: h * coeff,
                }
            };
            per_rollout.push(eval);
        }
        let mut total = pairwise_reduce(per_rollout, SurrogateEval::add)
            .unwrap_or_else(|| SurrogateEval::zeros(d));
        total.value = total.value / n + self.offset;
        total.gradient /= n;
        total.hessian /= n;
        Ok(total)
    }
}

/// Log lower bound anchored at `spec.anchor`. The branch rule of `spec` is
/// ignored; every rollout uses the log branch.
pub fn lower_bound_eval(
    batch: &LoggedBatch,
    spec: &SurrogateSpec,
    theta: &PolicyParams,
) -> Result<SurrogateEval> {
    let spec = SurrogateSpec {
        branch_rule: BranchRule::LowerOnly,
        ..spec.clone()
    };
    Surrogate::new(batch, &spec)?.evaluate(theta)
}

/// Mixed bound, valid for rewards of any sign. The branch rule of `spec` is
/// ignored.
pub fn mixed_bound_eval(
    batch: &LoggedBatch,
    spec: &SurrogateSpec,
    theta: &PolicyParams,
) -> Result<SurrogateEval> {
    let spec = SurrogateSpec {
        branch_rule: BranchRule::Mixed,
        ..spec.clone()
    };
    Surrogate::new(batch, &spec)?.evaluate(theta)
}

/// The classic PoWER bound: the lower bound anchored at the logging
/// parameters.
pub fn power_spec(batch: &LoggedBatch, estimator: &EstimatorConfig) -> SurrogateSpec {
    SurrogateSpec {
        anchor: batch.logging_params().clone(),
        estimator: *estimator,
        branch_rule: BranchRule::LowerOnly,
    }
}

pub fn power_bound_eval(
    batch: &LoggedBatch,
    estimator: &EstimatorConfig,
    theta: &PolicyParams,
) -> Result<SurrogateEval> {
    lower_bound_eval(batch, &power_spec(batch, estimator), theta)
}

/// `u_ν(τ_i|θ) / p(τ_i|ν) = exp[(θ − ν)ᵀ ∇log p(τ_i|ν)]`.
pub fn upper_bound_factor(
    batch: &LoggedBatch,
    anchor: &PolicyParams,
    index: usize,
    theta: &PolicyParams,
) -> Result<f64> {
    let r = batch.rollouts().get(index).ok_or_else(|| {
        Error::InvalidInput(format!("rollout index {index} out of range ({})", batch.len()))
    })?;
    let g = batch.policy().grad_log_prob_rollout(anchor, &r.steps)?;
    let exponent = (theta.as_vector() - anchor.as_vector()).dot(&g);
    if !(exponent <= EXPONENT_LIMIT) {
        return Err(Error::ExponentOverflow { index, exponent });
    }
    Ok(exponent.exp())
}

/// Change of the lower bound caused by shifting every reward by `beta`:
/// `β·[(1/N) Σ w_i^ν (1 + log p(τ_i|θ) − log p(τ_i|ν)) − 1]`.
///
/// This is a Monte-Carlo estimate of `−β·KL(p(·|ν) || p(·|θ))`. At `θ = ν`
/// it reduces to `β·(mean_i w_i^ν − 1)`, which is exactly zero when the anchor
/// weights average to one (always the case for `ν = θ₀` uncapped).
pub fn shift_gap(
    batch: &LoggedBatch,
    anchor: &PolicyParams,
    beta: f64,
    theta: &PolicyParams,
    weight_cap: Option<f64>,
) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidInput(format!("shift must be nonnegative, got {beta}")));
    }
    let terms = Arc::new(AnchorTerms::new(batch, anchor, weight_cap)?);
    let ones = vec![1.0; batch.len()];
    let surrogate = Surrogate::from_signal(batch, terms, ones.clone(), 0.0, BranchRule::LowerOnly)?;
    Ok(beta * (surrogate.weighted_mean(&ones, theta)? - 1.0))
}
