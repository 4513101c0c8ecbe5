//! Randomized self-checks of the core guarantees, runnable from the CLI.
//!
//! Each check draws small random batches and verifies one property against
//! an independent computation (finite differences, direct evaluation of the
//! estimate, or a serialization round trip).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{max_eigenvalue, BranchRule, Surrogate, SurrogateSpec};
use crate::estimator::{j_hat, shift_for_positivity, EstimatorConfig};
use crate::logio::{read_batch_from, write_batch_to};
use crate::optimizer::{iterative_power, IterPowerConfig};
use crate::policy::{BernoulliLogistic, Policy, PolicyParams, StepObservation};
use crate::trajectory::{LoggedBatch, Rollout};

/// Size limits of a random batch.
#[derive(Debug, Clone)]
pub struct InstanceShape {
    pub max_rollouts: usize,
    pub max_steps: usize,
    pub max_state_dim: usize,
    /// Rewards are uniform on `[reward_lo, reward_hi]`.
    pub reward_lo: f64,
    pub reward_hi: f64,
    pub with_aux: bool,
}

impl Default for InstanceShape {
    fn default() -> Self {
        Self {
            max_rollouts: 10,
            max_steps: 5,
            max_state_dim: 3,
            reward_lo: -2.0,
            reward_hi: 3.0,
            with_aux: false,
        }
    }
}

pub fn random_params(rng: &mut impl Rng, dim: usize, scale: f64) -> PolicyParams {
    PolicyParams::new((0..dim).map(|_| rng.random_range(-scale..=scale)).collect())
        .expect("finite draws")
}

/// A point within distance `radius` of `center`.
pub fn params_in_ball(rng: &mut impl Rng, center: &PolicyParams, radius: f64) -> PolicyParams {
    let dir: Vec<f64> = (0..center.dim()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
    let r = radius * rng.random::<f64>();
    let theta = center.as_slice().iter().zip(&dir).map(|(c, v)| c + r * v / norm).collect();
    PolicyParams::new(theta).expect("finite draws")
}

/// A batch of logistic-policy rollouts with actions sampled from a random
/// logging policy and states uniform on `[−1, 1]`.
pub fn random_batch(rng: &mut impl Rng, shape: &InstanceShape) -> LoggedBatch {
    let state_dim = rng.random_range(1..=shape.max_state_dim);
    let policy: Arc<dyn Policy> = if rng.random_bool(0.5) {
        Arc::new(BernoulliLogistic::new(state_dim))
    } else {
        Arc::new(BernoulliLogistic::with_bias(state_dim))
    };
    let theta0 = random_params(rng, policy.param_dim(), 1.0);
    let n = rng.random_range(1..=shape.max_rollouts);
    let rollouts = (0..n)
        .map(|_| {
            let len = rng.random_range(1..=shape.max_steps);
            let steps = (0..len)
                .map(|_| {
                    let state: Vec<f64> = (0..state_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
                    let (action, _) = policy.sample_action(&theta0, &state, &mut *rng).expect("valid state");
                    StepObservation::new(state, action)
                })
                .collect();
            let reward = rng.random_range(shape.reward_lo..=shape.reward_hi);
            let aux = shape.with_aux.then(|| rng.random_range(0.5..=2.0));
            Rollout::from_policy(policy.as_ref(), &theta0, steps, reward, aux).expect("valid rollout")
        })
        .collect();
    LoggedBatch::new(policy, theta0, rollouts).expect("valid batch")
}

/// Central-difference gradient of `f` at `x`.
pub fn fd_gradient(f: impl Fn(&PolicyParams) -> f64, x: &PolicyParams, h: f64) -> Vec<f64> {
    (0..x.dim())
        .map(|k| {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[k] += h;
            minus[k] -= h;
            let fp = f(&PolicyParams::new(plus).expect("finite"));
            let fm = f(&PolicyParams::new(minus).expect("finite"));
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub instances: usize,
    /// Description of the first failing instance.
    pub failure: Option<String>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

type Check = fn(&mut ChaCha8Rng) -> Result<(), String>;

fn policy_derivatives(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let batch = random_batch(rng, &InstanceShape::default());
    let pol = batch.policy();
    let th = random_params(rng, pol.param_dim(), 5.0);
    for r in batch.rollouts() {
        let g = pol.grad_log_prob_rollout(&th, &r.steps).map_err(|e| e.to_string())?;
        let fd = fd_gradient(|p| pol.log_prob_rollout(p, &r.steps).unwrap_or(f64::NAN), &th, 1e-5);
        let err = relative_error(g.as_slice(), &fd, 1e-3);
        if !(err < 1e-5) {
            return Err(format!("gradient relative error {err:e}"));
        }
        let h = pol.hessian_log_prob_rollout(&th, &r.steps).map_err(|e| e.to_string())?;
        if max_eigenvalue(&h) > 1e-12 * (1.0 + h.norm()) {
            return Err("log-probability Hessian is not negative semidefinite".into());
        }
    }
    Ok(())
}

fn bound_properties(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let batch = random_batch(rng, &InstanceShape::default());
    let anchor = params_in_ball(rng, batch.logging_params(), 1.0);
    let b = rng.random_range(-1.0..=1.0);
    let beta = shift_for_positivity(&batch, b);
    let specs = [
        (BranchRule::Mixed, EstimatorConfig { control_variate: b, ..Default::default() }),
        (
            BranchRule::LowerOnly,
            EstimatorConfig { control_variate: b, reward_shift: beta, ..Default::default() },
        ),
    ];
    for (rule, est) in specs {
        let spec = SurrogateSpec { anchor: anchor.clone(), estimator: est, branch_rule: rule };
        let sur = Surrogate::new(&batch, &spec).map_err(|e| e.to_string())?;
        let j = |p: &PolicyParams| j_hat(&batch, p, &est).unwrap_or(f64::NAN);
        let at = sur.evaluate(&anchor).map_err(|e| e.to_string())?;
        let scale = 1.0 + j(&anchor).abs();
        if (at.value - j(&anchor)).abs() > 1e-10 * scale {
            return Err(format!("{rule:?}: not tangent at the anchor"));
        }
        let err = relative_error(at.gradient.as_slice(), &fd_gradient(j, &anchor, 1e-6), 1e-6);
        if !(err < 1e-4) {
            return Err(format!("{rule:?}: gradient at the anchor off by {err:e}"));
        }
        for _ in 0..5 {
            let theta = params_in_ball(rng, &anchor, 5.0);
            let e = sur.evaluate(&theta).map_err(|e| e.to_string())?;
            if e.value > j(&theta) + 1e-10 * (1.0 + j(&theta).abs()) {
                return Err(format!("{rule:?}: surrogate exceeds the estimate"));
            }
            if max_eigenvalue(&e.hessian) > 1e-8 * e.hessian.norm() {
                return Err(format!("{rule:?}: surrogate Hessian has a positive eigenvalue"));
            }
        }
    }
    Ok(())
}

fn monotone_ascent(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let shape = InstanceShape { max_rollouts: 6, max_steps: 3, ..Default::default() };
    let batch = random_batch(rng, &shape);
    let cfg = IterPowerConfig { iterations: 10, recompute_cv_each_iteration: false, ..Default::default() };
    let report = iterative_power(&batch, &cfg).map_err(|e| e.to_string())?;
    let mut prev = report.initial_j_hat;
    for r in &report.records {
        if r.j_hat < prev - 1e-9 * prev.abs().max(1.0) {
            return Err(format!("estimate fell at iteration {}", r.iteration));
        }
        prev = r.j_hat;
    }
    Ok(())
}

fn file_round_trip(rng: &mut ChaCha8Rng) -> Result<(), String> {
    let with_aux = rng.random_bool(0.5);
    let batch = random_batch(rng, &InstanceShape { with_aux, ..Default::default() });
    let bytes = write_batch_to(&batch, Vec::new()).map_err(|e| e.to_string())?;
    let back = read_batch_from(bytes.as_slice()).map_err(|e| e.to_string())?;
    if back.rollouts() != batch.rollouts() || back.logging_params() != batch.logging_params() {
        return Err("batch changed after a write/read cycle".into());
    }
    Ok(())
}

/// Runs every check on `instances` random problems drawn from `seed`.
pub fn run_selftest(seed: u64, instances: usize) -> Vec<CheckResult> {
    let checks: [(&'static str, Check); 4] = [
        ("policy derivatives", policy_derivatives),
        ("surrogate bound properties", bound_properties),
        ("monotone ascent", monotone_ascent),
        ("batch file round trip", file_round_trip),
    ];
    checks
        .iter()
        .enumerate()
        .map(|(k, (name, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
            let failure = (0..instances).find_map(|i| check(&mut rng).err().map(|e| format!("instance {i}: {e}")));
            CheckResult { name, instances, failure }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        for r in run_selftest(7, 20) {
            assert!(r.passed(), "{}: {:?}", r.name, r.failure);
        }
    }
}
