//! Off-policy policy optimization from a fixed batch of logged rollouts.
//!
//! The expected return of a candidate policy is estimated by importance
//! sampling and maximized through a sequence of concave surrogates, each
//! anchored at the previous maximizer and solved by damped Newton steps.
//!
//! - [`policy`]: parameterized stochastic policies and their derivatives.
//! - [`trajectory`]: logged rollouts, batches and importance weights.
//! - [`logio`]: line-delimited JSON batch and parameter files.
//! - [`estimator`]: return estimate, control variate and reward shift.
//! - [`bounds`]: concave surrogates and their derivatives.
//! - [`optimizer`]: Newton maximizer and the iterated outer loop.
//! - [`cartpole`]: the cart-pole benchmark.
//! - [`harness`]: experiments and batch-file optimization.
//! - [`selftest`]: randomized checks of the core guarantees.

// Guards are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cartpole;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod logio;
pub mod numeric;
pub mod optimizer;
pub mod policy;
pub mod selftest;
pub mod trajectory;

pub use bounds::{BranchRule, Surrogate, SurrogateEval, SurrogateSpec};
pub use error::{Error, LogIoError, Result};
pub use estimator::{ControlVariate, EstimatorConfig};
pub use optimizer::{
    constrained_iterative_power, iterative_power, IterPowerConfig, IterationRecord, MultiplierConfig,
    NewtonConfig, OptimizationReport,
};
pub use policy::{BernoulliLogistic, Policy, PolicyParams, StepObservation};
pub use trajectory::{LoggedBatch, Rollout};
