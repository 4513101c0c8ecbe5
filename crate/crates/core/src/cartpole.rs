//! The classic cart-pole balancing task.
//!
//! Physics constants, thresholds, reward and start distribution follow the
//! widely used control benchmark: explicit Euler integration at 50 Hz, ±10 N
//! force, +1 reward for every step taken, episode ends once the cart leaves
//! ±2.4 m or the pole tilts beyond 12°.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::sigmoid;
use crate::policy::{BernoulliLogistic, Policy, PolicyParams, StepObservation};
use crate::trajectory::Rollout;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartpoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta_pole: f64,
    pub theta_dot: f64,
}

impl CartpoleState {
    pub fn to_vec(&self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta_pole, self.theta_dot]
    }

    pub fn mirrored(&self) -> Self {
        Self {
            x: -self.x,
            x_dot: -self.x_dot,
            theta_pole: -self.theta_pole,
            theta_dot: -self.theta_dot,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Push {
    Left,
    Right,
}

impl Push {
    /// Action index 1 pushes right.
    pub fn from_action(action: usize) -> Self {
        if action == 1 {
            Push::Right
        } else {
            Push::Left
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartpolePhysics {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half the pole length.
    pub pole_half_length: f64,
    pub force: f64,
    pub dt: f64,
    pub x_threshold: f64,
    pub angle_threshold: f64,
    /// Half-width of the uniform start distribution of every coordinate.
    pub init_range: f64,
}

impl Default for CartpolePhysics {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force: 10.0,
            dt: 0.02,
            x_threshold: 2.4,
            angle_threshold: 12.0 * std::f64::consts::PI / 180.0,
            init_range: 0.05,
        }
    }
}

impl CartpolePhysics {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.gravity,
            self.cart_mass,
            self.pole_mass,
            self.pole_half_length,
            self.force,
            self.dt,
            self.x_threshold,
            self.angle_threshold,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !(self.init_range >= 0.0) {
            return Err(Error::Config("cart-pole constants must be positive".into()));
        }
        Ok(())
    }

    pub fn is_alive(&self, s: &CartpoleState) -> bool {
        s.x.abs() <= self.x_threshold && s.theta_pole.abs() <= self.angle_threshold
    }
}

/// One Euler step; the flag is set when the new state is out of bounds.
pub fn step(state: &CartpoleState, push: Push, physics: &CartpolePhysics) -> (CartpoleState, bool) {
    let p = physics;
    let force = match push {
        Push::Right => p.force,
        Push::Left => -p.force,
    };
    let total_mass = p.cart_mass + p.pole_mass;
    let pole_mass_length = p.pole_mass * p.pole_half_length;
    let (sin, cos) = state.theta_pole.sin_cos();
    let temp = (force + pole_mass_length * state.theta_dot * state.theta_dot * sin) / total_mass;
    let theta_acc = (p.gravity * sin - cos * temp)
        / (p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total_mass));
    let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
    let next = CartpoleState {
        x: state.x + p.dt * state.x_dot,
        x_dot: state.x_dot + p.dt * x_acc,
        theta_pole: state.theta_pole + p.dt * state.theta_dot,
        theta_dot: state.theta_dot + p.dt * theta_acc,
    };
    let terminated = !p.is_alive(&next);
    (next, terminated)
}

/// Runs one episode from `initial`, drawing uniforms from `uniform` to pick
/// actions: action 1 iff `u < σ(sᵀθ)`.
pub fn run_rollout_from(
    policy: &BernoulliLogistic,
    params: &PolicyParams,
    initial: CartpoleState,
    max_steps: usize,
    physics: &CartpolePhysics,
    mut uniform: impl FnMut() -> f64,
) -> Result<Rollout> {
    if max_steps == 0 {
        return Err(Error::Config("max_steps must be at least 1".into()));
    }
    if policy.state_dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            actual: policy.state_dim(),
        });
    }
    let mut state = initial;
    let mut steps = Vec::with_capacity(max_steps);
    for _ in 0..max_steps {
        let features = state.to_vec();
        let z = policy.logit(params, &features)?;
        let action = usize::from(uniform() < sigmoid(z));
        steps.push(StepObservation::new(features, action));
        let (next, terminated) = step(&state, Push::from_action(action), physics);
        state = next;
        if terminated {
            break;
        }
    }
    let reward = steps.len() as f64;
    Rollout::from_policy(policy, params, steps, reward, None)
}

/// Runs one episode with a random stream seeded from `seed`.
pub fn run_rollout(
    policy: &BernoulliLogistic,
    params: &PolicyParams,
    max_steps: usize,
    seed: u64,
    physics: &CartpolePhysics,
) -> Result<Rollout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = physics.init_range;
    let initial = CartpoleState {
        x: rng.random_range(-r..=r),
        x_dot: rng.random_range(-r..=r),
        theta_pole: rng.random_range(-r..=r),
        theta_dot: rng.random_range(-r..=r),
    };
    run_rollout_from(policy, params, initial, max_steps, physics, || rng.random::<f64>())
}

/// `count` rollouts with seeds `base_seed, base_seed + 1, …`.
pub fn run_rollouts(
    policy: &BernoulliLogistic,
    params: &PolicyParams,
    count: usize,
    max_steps: usize,
    base_seed: u64,
    physics: &CartpolePhysics,
) -> Result<Vec<Rollout>> {
    (0..count)
        .map(|i| run_rollout(policy, params, max_steps, base_seed.wrapping_add(i as u64), physics))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rest() -> CartpoleState {
        CartpoleState {
            x: 0.0,
            x_dot: 0.0,
            theta_pole: 0.0,
            theta_dot: 0.0,
        }
    }

    #[test]
    fn push_right_from_rest() {
        let phys = CartpolePhysics::default();
        let (next, done) = step(&rest(), Push::Right, &phys);
        assert!(!done);
        // temp = 10/1.1; θ̈ = −temp / (0.5·(4/3 − 0.1/1.1)); ẍ = temp − 0.05·θ̈/1.1
        let temp: f64 = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        assert!((theta_acc + 14.634).abs() < 1e-3);
        assert_eq!(next.x, 0.0);
        assert_eq!(next.theta_pole, 0.0);
        assert!((next.x_dot - 0.02 * x_acc).abs() < 1e-15);
        assert!((next.x_dot - 0.195122).abs() < 1e-6);
        assert!((next.theta_dot + 0.292683).abs() < 1e-6);
    }

    #[test]
    fn left_and_right_are_mirrored() {
        let phys = CartpolePhysics::default();
        let s = CartpoleState {
            x: 0.3,
            x_dot: -0.2,
            theta_pole: 0.05,
            theta_dot: 0.4,
        };
        let (r, _) = step(&s, Push::Right, &phys);
        let (l, _) = step(&s.mirrored(), Push::Left, &phys);
        assert_eq!(r.mirrored(), l);
    }

    #[test]
    fn crossing_the_track_edge_terminates() {
        let phys = CartpolePhysics::default();
        let s = CartpoleState {
            x: 2.39,
            x_dot: 2.0,
            theta_pole: 0.0,
            theta_dot: 0.0,
        };
        for push in [Push::Left, Push::Right] {
            assert!(step(&s, push, &phys).1);
        }
    }

    #[test]
    fn rollouts_are_deterministic_and_consistent() {
        let pol = BernoulliLogistic::new(4);
        let th = PolicyParams::new(vec![0.1, 0.5, 3.0, 0.8]).unwrap();
        let phys = CartpolePhysics::default();
        let a = run_rollout(&pol, &th, 400, 42, &phys).unwrap();
        let b = run_rollout(&pol, &th, 400, 42, &phys).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.reward, a.steps.len() as f64);
        assert!(a.reward >= 1.0 && a.reward <= 400.0);
        assert_eq!(a.log_prob_logging, pol.log_prob_rollout(&th, &a.steps).unwrap());
    }

    #[test]
    fn anti_stabilizing_policy_falls_quickly() {
        // Pushing in the direction opposite to the pole's fall.
        let pol = BernoulliLogistic::new(4);
        let th = PolicyParams::new(vec![0.0, 0.0, -200.0, -50.0]).unwrap();
        let phys = CartpolePhysics::default();
        let rs = run_rollouts(&pol, &th, 50, 400, 9, &phys).unwrap();
        let mean = rs.iter().map(|r| r.reward).sum::<f64>() / 50.0;
        assert!(mean < 20.0, "mean return {mean}");
    }

    #[test]
    fn zero_steps_rejected() {
        let pol = BernoulliLogistic::new(4);
        let th = PolicyParams::zeros(4);
        assert!(run_rollout(&pol, &th, 0, 1, &CartpolePhysics::default()).is_err());
    }
}
