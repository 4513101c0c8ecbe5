//! Newton maximization of concave surrogates and the iterated re-anchoring
//! loop built on top of it.
//!
//! Each outer iteration anchors a fresh surrogate at the current parameters
//! and maximizes it with a few damped Newton steps. Because the surrogate is
//! tangent to the estimator at its anchor and lies below it (uncapped), every
//! outer iteration can only increase the estimate.

use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::{
    max_eigenvalue, AnchorTerms, BranchRule, Surrogate, SurrogateEval, SurrogateSpec,
};
use crate::error::{Error, Result};
use crate::estimator::{
    j_hat_from_weights, optimal_control_variate_from, shift_for_positivity, EstimatorConfig,
};
use crate::numeric::pairwise_sum;
use crate::policy::PolicyParams;
use crate::trajectory::{effective_sample_size, importance_weights, LoggedBatch};

/// A smooth function to be maximized.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, theta: &PolicyParams) -> Result<f64>;

    fn evaluate(&self, theta: &PolicyParams) -> Result<SurrogateEval>;
}

impl Objective for Surrogate<'_> {
    fn dim(&self) -> usize {
        Surrogate::dim(self)
    }

    fn value(&self, theta: &PolicyParams) -> Result<f64> {
        Surrogate::value(self, theta)
    }

    fn evaluate(&self, theta: &PolicyParams) -> Result<SurrogateEval> {
        Surrogate::evaluate(self, theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub steps_per_iteration: usize,
    /// Added to the negated Hessian before solving for the step.
    pub ridge: f64,
    pub max_step_norm: f64,
    pub backtracking: bool,
    pub shrink: f64,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            steps_per_iteration: 5,
            ridge: 1e-6,
            max_step_norm: 10.0,
            backtracking: true,
            shrink: 0.5,
            max_halvings: 20,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_iteration == 0 {
            return Err(Error::Config("Newton steps per iteration must be at least 1".into()));
        }
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(Error::Config(format!("ridge must be nonnegative, got {}", self.ridge)));
        }
        if !(self.max_step_norm > 0.0) {
            return Err(Error::Config("max step norm must be positive".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config("backtracking shrink factor must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Result of [`newton_maximize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub params: PolicyParams,
    pub value: f64,
    /// Objective value at the start followed by the value after each accepted step.
    pub values: Vec<f64>,
    pub steps_taken: usize,
    /// Set when backtracking could not find a non-decreasing step.
    pub backtrack_exhausted: bool,
}

const RIDGE_CEILING: f64 = 1e2;
const RIDGE_FLOOR: f64 = 1e-12;

/// Solves `(−H + ridge·I) d = g`, growing the ridge tenfold on failure.
fn newton_direction(eval: &SurrogateEval, ridge: f64) -> Result<DVector<f64>> {
    let d = eval.gradient.len();
    let neg_h = -&eval.hessian;
    let mut ridge = ridge;
    loop {
        let a = &neg_h + DMatrix::identity(d, d) * ridge;
        if let Some(chol) = a.cholesky() {
            let step = chol.solve(&eval.gradient);
            if step.iter().all(|v| v.is_finite()) {
                return Ok(step);
            }
        }
        if ridge >= RIDGE_CEILING {
            return Err(Error::SingularHessian { ridge });
        }
        ridge = (ridge * 10.0).clamp(RIDGE_FLOOR, RIDGE_CEILING);
    }
}

fn check_concave(eval: &SurrogateEval) -> Result<()> {
    let scale = eval.hessian.norm();
    let top = max_eigenvalue(&eval.hessian);
    if top > 1e-8 * scale + f64::MIN_POSITIVE {
        return Err(Error::NotConcave { max_eigenvalue: top });
    }
    Ok(())
}

/// Damped Newton ascent on a concave objective.
///
/// Each step solves `(−H + ridge·I) d = g`, clamps `‖d‖` to
/// `max_step_norm`, and halves the step until the objective does not
/// decrease. The returned value is never below the starting value.
pub fn newton_maximize<O: Objective + ?Sized>(
    objective: &O,
    init: &PolicyParams,
    config: &NewtonConfig,
) -> Result<NewtonOutcome> {
    config.validate()?;
    if init.dim() != objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: objective.dim(),
            actual: init.dim(),
        });
    }
    let mut theta = init.clone();
    let mut eval = objective.evaluate(&theta)?;
    if !eval.value.is_finite() {
        return Err(Error::InvalidInput("objective is not finite at the starting point".into()));
    }
    check_concave(&eval)?;
    let mut values = vec![eval.value];
    let mut steps_taken = 0;
    let mut backtrack_exhausted = false;

    for k in 0..config.steps_per_iteration {
        let mut step = newton_direction(&eval, config.ridge)?;
        // Predicted increase gᵀA⁻¹g; stop once it is below rounding level.
        let decrement = eval.gradient.dot(&step);
        if !(decrement > 4.0 * f64::EPSILON * eval.value.abs().max(1.0)) {
            break;
        }
        let norm = step.norm();
        if norm > config.max_step_norm {
            step *= config.max_step_norm / norm;
        }

        let mut accepted = None;
        let mut halvings = 0;
        loop {
            let candidate = PolicyParams::from_vector(theta.as_vector() + &step);
            let trial = candidate.and_then(|c| objective.value(&c).map(|v| (c, v)));
            match trial {
                Ok((c, v)) if v.is_finite() && (!config.backtracking || v >= eval.value) => {
                    accepted = Some(c);
                    break;
                }
                Ok(_) | Err(_) if config.backtracking => {}
                Ok((_, v)) => {
                    return Err(Error::InvalidInput(format!(
                        "objective became non-finite ({v}) after Newton step {k}"
                    )))
                }
                Err(e) => return Err(e),
            }
            if halvings == config.max_halvings {
                break;
            }
            step *= config.shrink;
            halvings += 1;
        }

        let Some(next) = accepted else {
            debug!("backtracking exhausted after {halvings} halvings at Newton step {k}");
            backtrack_exhausted = true;
            break;
        };
        theta = next;
        eval = objective.evaluate(&theta)?;
        values.push(eval.value);
        steps_taken += 1;
    }

    Ok(NewtonOutcome {
        value: eval.value,
        params: theta,
        values,
        steps_taken,
        backtrack_exhausted,
    })
}

/// Builds the surrogate described by `spec` and maximizes it from `init`.
pub fn maximize_surrogate(
    batch: &LoggedBatch,
    spec: &SurrogateSpec,
    init: &PolicyParams,
    config: &NewtonConfig,
) -> Result<NewtonOutcome> {
    let surrogate = Surrogate::new(batch, spec)?;
    newton_maximize(&surrogate, init, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IterPowerConfig {
    pub iterations: usize,
    pub newton: NewtonConfig,
    pub estimator: EstimatorConfig,
    /// Recompute `cv_fraction · b*` at every anchor; otherwise the fixed
    /// `estimator.control_variate` is used.
    pub recompute_cv_each_iteration: bool,
    pub branch_rule: BranchRule,
}

impl Default for IterPowerConfig {
    fn default() -> Self {
        Self {
            iterations: 1,
            newton: NewtonConfig::default(),
            estimator: EstimatorConfig::default(),
            recompute_cv_each_iteration: true,
            branch_rule: BranchRule::Mixed,
        }
    }
}

impl IterPowerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("number of iterations must be at least 1".into()));
        }
        self.newton.validate()?;
        self.estimator.validate()
    }
}

/// Settings for the Lagrange multiplier of an equality constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiplierConfig {
    pub initial: f64,
    /// Dual step size; defaults to `0.1 / |target|` (or 0.1 when the target is 0).
    pub step_size: Option<f64>,
    pub max_dual_steps: usize,
    /// Relative gap at which the dual loop of one iteration stops.
    pub dual_tolerance: f64,
    /// Relative gap of the importance-sampling constraint estimate below
    /// which the final parameters count as feasible.
    pub feasibility_tolerance: f64,
    /// Keep the multiplier at `initial` instead of updating it.
    pub fixed: bool,
    pub divergence_limit: f64,
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        Self {
            initial: 0.0,
            step_size: None,
            max_dual_steps: 50,
            dual_tolerance: 1e-4,
            feasibility_tolerance: 1e-3,
            fixed: false,
            divergence_limit: 1e6,
        }
    }
}

impl MultiplierConfig {
    fn scale(target: f64) -> f64 {
        if target != 0.0 {
            target.abs()
        } else {
            1.0
        }
    }

    fn effective_step(&self, target: f64) -> f64 {
        self.step_size.unwrap_or(0.1 / Self::scale(target))
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_dual_steps == 0 {
            return Err(Error::Config("max dual steps must be at least 1".into()));
        }
        if let Some(eta) = self.step_size {
            if !(eta > 0.0) {
                return Err(Error::Config("dual step size must be positive".into()));
            }
        }
        if !self.initial.is_finite() || !(self.divergence_limit > 0.0) {
            return Err(Error::Config("invalid multiplier settings".into()));
        }
        Ok(())
    }
}

/// Summary of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub theta: Vec<f64>,
    /// Surrogate value at its anchor, equal to the estimator there.
    pub surrogate_at_anchor: f64,
    /// Surrogate value at the new parameters.
    pub surrogate_value: f64,
    /// Plain importance-sampling estimate (no shift or control variate) at the
    /// new parameters, with the configured weight cap.
    pub j_hat: f64,
    pub ess: f64,
    pub weight_max: f64,
    pub control_variate: f64,
    pub cv_degenerate: bool,
    pub reward_shift: f64,
    pub newton_steps: usize,
    pub backtrack_exhausted: bool,
    /// Importance-sampling estimate of `E[S] − S₀` at the new parameters.
    pub constraint_gap: Option<f64>,
    pub multiplier: Option<f64>,
    pub dual_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub initial_theta: Vec<f64>,
    pub initial_j_hat: f64,
    pub records: Vec<IterationRecord>,
    pub final_theta: PolicyParams,
    /// Whether the final parameters satisfy the constraint; `None` when
    /// unconstrained.
    pub feasible: Option<bool>,
}

impl OptimizationReport {
    pub fn final_j_hat(&self) -> f64 {
        self.records.last().map_or(self.initial_j_hat, |r| r.j_hat)
    }
}

/// Equality constraint `E_θ[S] = target` on the rollouts' auxiliary signal.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Constraint {
    target: f64,
    multiplier: MultiplierConfig,
}

/// Iterated re-anchoring of the concave surrogate.
///
/// Starting from the logging parameters, each of the `T` iterations anchors
/// the surrogate at the current parameters, optionally recomputes the
/// control variate from the weights at that anchor, and runs the Newton
/// maximizer. With `T = 1` this is exactly the classic PoWER update.
pub fn iterative_power(batch: &LoggedBatch, config: &IterPowerConfig) -> Result<OptimizationReport> {
    run(batch, config, None)
}

/// Iterated re-anchoring with the Lagrangian of `E_θ[S] = target`.
///
/// For a multiplier `α` the maximized surrogate is the mixed bound of the
/// combined signal `R'_i + α·S_i`, which is concave for any sign of `α`.
/// Between inner maximizations `α ← α − η·(Ŝ_ν(θ) − S₀)`, where `Ŝ_ν` is the
/// constraint part of the same bound.
pub fn constrained_iterative_power(
    batch: &LoggedBatch,
    config: &IterPowerConfig,
    target: f64,
    multiplier: &MultiplierConfig,
) -> Result<OptimizationReport> {
    if !target.is_finite() {
        return Err(Error::Config("constraint target must be finite".into()));
    }
    multiplier.validate()?;
    batch.aux_signals()?;
    run(
        batch,
        config,
        Some(Constraint {
            target,
            multiplier: *multiplier,
        }),
    )
}

fn plain_estimate(batch: &LoggedBatch, weights: &[f64]) -> f64 {
    j_hat_from_weights(&batch.rewards(), weights, &EstimatorConfig::default())
}

fn run(
    batch: &LoggedBatch,
    config: &IterPowerConfig,
    constraint: Option<Constraint>,
) -> Result<OptimizationReport> {
    config.validate()?;
    let cap = config.estimator.weight_cap;
    let rewards = batch.rewards();
    let aux = match constraint {
        Some(_) => Some(batch.aux_signals()?),
        None => None,
    };

    let initial = batch.logging_params().clone();
    let initial_weights = importance_weights(batch, &initial, cap)?;
    let initial_j_hat = plain_estimate(batch, &initial_weights);
    let mut theta = initial.clone();
    let mut alpha = constraint.map(|c| c.multiplier.initial);
    let mut records = Vec::with_capacity(config.iterations);

    for iteration in 1..=config.iterations {
        let anchor = theta.clone();
        let terms = Arc::new(AnchorTerms::new(batch, &anchor, cap)?);

        let (control_variate, cv_degenerate) = if config.recompute_cv_each_iteration {
            let cv = optimal_control_variate_from(&rewards, terms.weights());
            (config.estimator.cv_fraction * cv.value, cv.degenerate)
        } else {
            (config.estimator.control_variate, false)
        };
        let reward_shift = match config.branch_rule {
            BranchRule::LowerOnly => config
                .estimator
                .reward_shift
                .max(shift_for_positivity(batch, control_variate)),
            BranchRule::Mixed => config.estimator.reward_shift,
        };
        let estimator = EstimatorConfig {
            control_variate,
            reward_shift,
            ..config.estimator
        };
        let effective: Vec<f64> = rewards.iter().map(|r| estimator.effective_reward(*r)).collect();

        let (outcome, surrogate_at_anchor, dual) = match (constraint, aux.as_deref()) {
            (Some(c), Some(aux)) => {
                let alpha_ref = alpha.as_mut().expect("multiplier is set when constrained");
                let (outcome, at_anchor, steps) = solve_lagrangian(
                    batch,
                    &terms,
                    &effective,
                    aux,
                    estimator.offset(),
                    config,
                    &c,
                    alpha_ref,
                    iteration,
                )?;
                (outcome, at_anchor, Some(steps))
            }
            _ => {
                let surrogate = Surrogate::from_signal(
                    batch,
                    Arc::clone(&terms),
                    effective,
                    estimator.offset(),
                    config.branch_rule,
                )?;
                let at_anchor = surrogate.value(&anchor)?;
                if !at_anchor.is_finite() {
                    return Err(Error::NonFiniteSurrogate { iteration });
                }
                (newton_maximize(&surrogate, &anchor, &config.newton)?, at_anchor, None)
            }
        };
        theta = outcome.params.clone();

        let weights = importance_weights(batch, &theta, cap)?;
        let constraint_gap = match (constraint, aux.as_deref()) {
            (Some(c), Some(aux)) => {
                let terms: Vec<f64> = weights.iter().zip(aux).map(|(w, s)| w * s).collect();
                Some(pairwise_sum(&terms) / batch.len() as f64 - c.target)
            }
            _ => None,
        };
        records.push(IterationRecord {
            iteration,
            theta: theta.to_vec(),
            surrogate_at_anchor,
            surrogate_value: outcome.value,
            j_hat: plain_estimate(batch, &weights),
            ess: effective_sample_size(&weights).unwrap_or(0.0),
            weight_max: weights.iter().cloned().fold(0.0, f64::max),
            control_variate,
            cv_degenerate,
            reward_shift,
            newton_steps: outcome.steps_taken,
            backtrack_exhausted: outcome.backtrack_exhausted,
            constraint_gap,
            multiplier: alpha,
            dual_steps: dual,
        });
    }

    let feasible = constraint.map(|c| {
        records.last().and_then(|r| r.constraint_gap).is_some_and(|gap| {
            gap.abs() <= c.multiplier.feasibility_tolerance * MultiplierConfig::scale(c.target)
        })
    });
    Ok(OptimizationReport {
        initial_theta: initial.to_vec(),
        initial_j_hat,
        records,
        final_theta: theta,
        feasible,
    })
}

#[allow(clippy::too_many_arguments)]
fn solve_lagrangian(
    batch: &LoggedBatch,
    terms: &Arc<AnchorTerms>,
    effective: &[f64],
    aux: &[f64],
    offset: f64,
    config: &IterPowerConfig,
    constraint: &Constraint,
    alpha: &mut f64,
    iteration: usize,
) -> Result<(NewtonOutcome, f64, usize)> {
    let anchor = terms.anchor().clone();
    let target = constraint.target;
    let mult = &constraint.multiplier;
    let eta = mult.effective_step(target);
    let scale = MultiplierConfig::scale(target);

    let mut start = anchor.clone();
    let mut last = None;
    let mut at_anchor = f64::NAN;
    let mut steps = 0;
    for k in 0..mult.max_dual_steps {
        let mut signal: Vec<f64> = effective.iter().zip(aux).map(|(r, s)| r + *alpha * s).collect();
        let mut lag_offset = offset - *alpha * target;
        if config.branch_rule == BranchRule::LowerOnly {
            let shift = signal.iter().cloned().fold(f64::INFINITY, f64::min).min(0.0);
            if shift < 0.0 {
                signal.iter_mut().for_each(|v| *v -= shift);
                lag_offset += shift;
            }
        }
        let surrogate =
            Surrogate::from_signal(batch, Arc::clone(terms), signal, lag_offset, config.branch_rule)?;
        if k == 0 {
            at_anchor = surrogate.value(&anchor)?;
            if !at_anchor.is_finite() {
                return Err(Error::NonFiniteSurrogate { iteration });
            }
        }
        let outcome = newton_maximize(&surrogate, &start, &config.newton)?;
        let gap = surrogate.weighted_mean(aux, &outcome.params)? - target;
        steps = k + 1;
        start = outcome.params.clone();
        last = Some(outcome);
        if mult.fixed || gap.abs() <= mult.dual_tolerance * scale {
            break;
        }
        *alpha -= eta * gap;
        if !(alpha.abs() <= mult.divergence_limit) {
            return Err(Error::DualDivergence {
                iteration,
                alpha: *alpha,
                gap,
            });
        }
    }
    Ok((last.expect("at least one dual step"), at_anchor, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{BernoulliLogistic, Policy, StepObservation};
    use crate::trajectory::Rollout;

    /// f(θ) = −½ (θ − c)ᵀ A (θ − c) + 3 with A positive definite.
    struct Quadratic {
        a: DMatrix<f64>,
        c: DVector<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.c.len()
        }

        fn value(&self, theta: &PolicyParams) -> Result<f64> {
            let d = theta.as_vector() - &self.c;
            Ok(-0.5 * d.dot(&(&self.a * &d)) + 3.0)
        }

        fn evaluate(&self, theta: &PolicyParams) -> Result<SurrogateEval> {
            let d = theta.as_vector() - &self.c;
            Ok(SurrogateEval {
                value: self.value(theta)?,
                gradient: -(&self.a * &d),
                hessian: -self.a.clone(),
            })
        }
    }

    fn quadratic() -> Quadratic {
        Quadratic {
            a: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            c: DVector::from_vec(vec![1.5, -0.75]),
        }
    }

    #[test]
    fn newton_is_exact_on_quadratics() {
        let q = quadratic();
        let cfg = NewtonConfig {
            ridge: 0.0,
            steps_per_iteration: 1,
            ..Default::default()
        };
        let out = newton_maximize(&q, &PolicyParams::zeros(2), &cfg).unwrap();
        assert!((out.params.as_vector() - &q.c).norm() < 1e-10);
        assert!((out.value - 3.0).abs() < 1e-10);
        assert_eq!(out.steps_taken, 1);
    }

    #[test]
    fn newton_fixed_point_returns_init() {
        let q = quadratic();
        let init = PolicyParams::from_vector(q.c.clone()).unwrap();
        let out = newton_maximize(&q, &init, &NewtonConfig::default()).unwrap();
        assert_eq!(out.params, init);
        assert_eq!(out.steps_taken, 0);
        assert!(!out.backtrack_exhausted);
    }

    #[test]
    fn newton_rejects_convex_objectives() {
        let q = Quadratic {
            a: -DMatrix::identity(2, 2),
            c: DVector::zeros(2),
        };
        let init = PolicyParams::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            newton_maximize(&q, &init, &NewtonConfig::default()),
            Err(Error::NotConcave { .. })
        ));
    }

    #[test]
    fn singular_hessian_escalates_ridge() {
        // Flat in the second coordinate: needs the ridge to solve.
        let q = Quadratic {
            a: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            c: DVector::from_vec(vec![2.0, 0.0]),
        };
        let cfg = NewtonConfig {
            ridge: 0.0,
            ..Default::default()
        };
        let out = newton_maximize(&q, &PolicyParams::zeros(2), &cfg).unwrap();
        assert!((out.params.as_slice()[0] - 2.0).abs() < 1e-6);
    }

    fn one_step_batch(entries: &[(f64, usize, f64)]) -> LoggedBatch {
        let pol: Arc<dyn Policy> = Arc::new(BernoulliLogistic::new(1));
        let th0 = PolicyParams::zeros(1);
        let rollouts = entries
            .iter()
            .map(|(s, a, r)| {
                Rollout::from_policy(
                    pol.as_ref(),
                    &th0,
                    vec![StepObservation::new(vec![*s], *a)],
                    *r,
                    None,
                )
                .unwrap()
            })
            .collect();
        LoggedBatch::new(pol, th0, rollouts).unwrap()
    }

    #[test]
    fn unbounded_power_bound_increases_monotonically_with_clamped_steps() {
        // 1 + log σ(θ) − log σ(0) grows without bound; every step is clamped.
        let b = one_step_batch(&[(1.0, 1, 1.0)]);
        let cfg = NewtonConfig {
            max_step_norm: 0.5,
            steps_per_iteration: 8,
            ..Default::default()
        };
        let spec = crate::bounds::power_spec(&b, &EstimatorConfig::default());
        let out = maximize_surrogate(&b, &spec, b.logging_params(), &cfg).unwrap();
        assert_eq!(out.steps_taken, 8);
        assert!((out.params.as_slice()[0] - 4.0).abs() < 1e-12);
        assert!(out.values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn zero_iterations_rejected() {
        let b = one_step_batch(&[(1.0, 1, 1.0)]);
        let cfg = IterPowerConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(matches!(iterative_power(&b, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn constrained_requires_aux_signal() {
        let b = one_step_batch(&[(1.0, 1, 1.0), (1.0, 0, 0.0)]);
        let err = constrained_iterative_power(
            &b,
            &IterPowerConfig::default(),
            1.0,
            &MultiplierConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::MissingAuxSignal { index: 0 }));
    }

    #[test]
    fn identical_rollouts_move_along_reinforce_direction() {
        let b = one_step_batch(&[(1.0, 1, 2.0), (1.0, 1, 2.0), (1.0, 1, 2.0)]);
        let cfg = IterPowerConfig {
            iterations: 4,
            ..Default::default()
        };
        let rep = iterative_power(&b, &cfg).unwrap();
        let mut prev = 0.0;
        for r in &rep.records {
            assert!(r.theta[0] > prev);
            assert!(r.surrogate_value >= r.surrogate_at_anchor);
            prev = r.theta[0];
        }
    }
}
