//! Log-concave stochastic policy families.
//!
//! A rollout's probability factors into environment dynamics and per-step
//! action probabilities. Only the action part depends on the parameters, and
//! every quantity in this crate is a ratio of rollout probabilities, so the
//! dynamics cancel. A [`Policy`] therefore only needs to expose the log
//! action probability together with its gradient and Hessian.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_sigmoid, sigmoid};

/// Parameter vector of a policy family.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolicyParams(DVector<f64>);

impl PolicyParams {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        Self::from_vector(DVector::from_vec(theta))
    }

    pub fn from_vector(theta: DVector<f64>) -> Result<Self> {
        if let Some(index) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteParams { index });
        }
        Ok(Self(theta))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.as_slice().to_vec()
    }
}

impl fmt::Debug for PolicyParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("PolicyParams").field(&self.as_slice()).finish()
    }
}

impl TryFrom<Vec<f64>> for PolicyParams {
    type Error = Error;

    fn try_from(theta: Vec<f64>) -> Result<Self> {
        Self::new(theta)
    }
}

impl From<PolicyParams> for Vec<f64> {
    fn from(p: PolicyParams) -> Self {
        p.to_vec()
    }
}

/// One (state, action) pair of a rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepObservation {
    pub state: Vec<f64>,
    pub action: usize,
}

impl StepObservation {
    pub fn new(state: Vec<f64>, action: usize) -> Self {
        Self { state, action }
    }
}

/// A policy family whose rollout log-probability is concave in the parameters.
///
/// Implementors provide the per-step log-probability and its derivatives; the
/// rollout-level quantities are sums over steps.
pub trait Policy: Send + Sync + fmt::Debug {
    /// Name recorded in batch file headers.
    fn name(&self) -> &str;

    fn param_dim(&self) -> usize;

    fn state_dim(&self) -> usize;

    fn num_actions(&self) -> usize;

    /// `log π(a | s, θ)`.
    fn log_prob_step(&self, params: &PolicyParams, obs: &StepObservation) -> Result<f64>;

    /// Returns `log π(a | s, θ)` and adds its gradient to `grad` and, when
    /// given, its Hessian to `hess`.
    fn accumulate_step(
        &self,
        params: &PolicyParams,
        obs: &StepObservation,
        grad: &mut DVector<f64>,
        hess: Option<&mut DMatrix<f64>>,
    ) -> Result<f64>;

    /// Draws an action for `state` and returns it with its log-probability.
    fn sample_action(
        &self,
        params: &PolicyParams,
        state: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<(usize, f64)>;

    fn log_prob_rollout(&self, params: &PolicyParams, steps: &[StepObservation]) -> Result<f64> {
        if steps.is_empty() {
            return Err(Error::InvalidInput("rollout has no steps".into()));
        }
        let mut total = 0.0;
        for obs in steps {
            total += self.log_prob_step(params, obs)?;
        }
        Ok(total)
    }

    fn grad_log_prob_rollout(
        &self,
        params: &PolicyParams,
        steps: &[StepObservation],
    ) -> Result<DVector<f64>> {
        let mut grad = DVector::zeros(self.param_dim());
        for obs in steps {
            self.accumulate_step(params, obs, &mut grad, None)?;
        }
        Ok(grad)
    }

    fn hessian_log_prob_rollout(
        &self,
        params: &PolicyParams,
        steps: &[StepObservation],
    ) -> Result<DMatrix<f64>> {
        let d = self.param_dim();
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        for obs in steps {
            self.accumulate_step(params, obs, &mut grad, Some(&mut hess))?;
        }
        Ok(hess)
    }

    /// Log-probability, gradient and (optionally) Hessian of a rollout in one pass.
    fn rollout_derivatives(
        &self,
        params: &PolicyParams,
        steps: &[StepObservation],
        with_hessian: bool,
    ) -> Result<(f64, DVector<f64>, Option<DMatrix<f64>>)> {
        let d = self.param_dim();
        let mut grad = DVector::zeros(d);
        let mut hess = with_hessian.then(|| DMatrix::zeros(d, d));
        let mut total = 0.0;
        for obs in steps {
            total += self.accumulate_step(params, obs, &mut grad, hess.as_mut())?;
        }
        Ok((total, grad, hess))
    }
}

/// Binary-action policy moving "right" (action 1) with probability `σ(xᵀθ)`,
/// where `x` is the state, optionally extended with a constant bias feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BernoulliLogistic {
    state_dim: usize,
    bias: bool,
}

impl BernoulliLogistic {
    pub const NAME: &'static str = "bernoulli_logistic";
    pub const NAME_WITH_BIAS: &'static str = "bernoulli_logistic_bias";

    pub fn new(state_dim: usize) -> Self {
        Self {
            state_dim,
            bias: false,
        }
    }

    pub fn with_bias(state_dim: usize) -> Self {
        Self {
            state_dim,
            bias: true,
        }
    }

    pub fn has_bias(&self) -> bool {
        self.bias
    }

    /// The logit `xᵀθ`.
    pub fn logit(&self, params: &PolicyParams, state: &[f64]) -> Result<f64> {
        self.check_params(params)?;
        if state.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                actual: state.len(),
            });
        }
        let theta = params.as_slice();
        let mut z: f64 = state.iter().zip(theta).map(|(s, t)| s * t).sum();
        if self.bias {
            z += theta[self.state_dim];
        }
        Ok(z)
    }

    fn check_params(&self, params: &PolicyParams) -> Result<()> {
        if params.dim() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                actual: params.dim(),
            });
        }
        Ok(())
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action > 1 {
            return Err(Error::InvalidAction {
                action,
                num_actions: 2,
            });
        }
        Ok(())
    }

    fn feature(&self, state: &[f64], i: usize) -> f64 {
        if i < self.state_dim {
            state[i]
        } else {
            1.0
        }
    }
}

impl Policy for BernoulliLogistic {
    fn name(&self) -> &str {
        if self.bias {
            Self::NAME_WITH_BIAS
        } else {
            Self::NAME
        }
    }

    fn param_dim(&self) -> usize {
        self.state_dim + usize::from(self.bias)
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn num_actions(&self) -> usize {
        2
    }

    fn log_prob_step(&self, params: &PolicyParams, obs: &StepObservation) -> Result<f64> {
        self.check_action(obs.action)?;
        let z = self.logit(params, &obs.state)?;
        Ok(if obs.action == 1 {
            log_sigmoid(z)
        } else {
            log_sigmoid(-z)
        })
    }

    fn accumulate_step(
        &self,
        params: &PolicyParams,
        obs: &StepObservation,
        grad: &mut DVector<f64>,
        hess: Option<&mut DMatrix<f64>>,
    ) -> Result<f64> {
        self.check_action(obs.action)?;
        let z = self.logit(params, &obs.state)?;
        let p = sigmoid(z);
        let a = obs.action as f64;
        let d = self.param_dim();
        let residual = a - p;
        for i in 0..d {
            grad[i] += residual * self.feature(&obs.state, i);
        }
        if let Some(h) = hess {
            // σ(1 − σ) computed from both tails to keep precision at large |z|.
            let curvature = sigmoid(z) * sigmoid(-z);
            for i in 0..d {
                let fi = self.feature(&obs.state, i);
                for j in 0..=i {
                    let v = curvature * fi * self.feature(&obs.state, j);
                    h[(i, j)] -= v;
                    if i != j {
                        h[(j, i)] -= v;
                    }
                }
            }
        }
        Ok(if obs.action == 1 {
            log_sigmoid(z)
        } else {
            log_sigmoid(-z)
        })
    }

    fn sample_action(
        &self,
        params: &PolicyParams,
        state: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<(usize, f64)> {
        let z = self.logit(params, state)?;
        let u: f64 = rng.random();
        let action = usize::from(u < sigmoid(z));
        let log_prob = if action == 1 {
            log_sigmoid(z)
        } else {
            log_sigmoid(-z)
        };
        Ok((action, log_prob))
    }
}

/// Looks up a shipped policy family by the name stored in batch files.
pub fn family_from_name(name: &str, param_dim: usize) -> Option<Arc<dyn Policy>> {
    match name {
        BernoulliLogistic::NAME => Some(Arc::new(BernoulliLogistic::new(param_dim))),
        BernoulliLogistic::NAME_WITH_BIAS if param_dim >= 1 => {
            Some(Arc::new(BernoulliLogistic::with_bias(param_dim - 1)))
        }
        _ => None,
    }
}
