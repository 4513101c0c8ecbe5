use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid action {action} (policy has {num_actions} actions)")]
    InvalidAction { action: usize, num_actions: usize },

    #[error("non-finite parameter at index {index}")]
    NonFiniteParams { index: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("logged batch must contain at least one rollout")]
    EmptyBatch,

    #[error("rollout {index} has no steps")]
    EmptyRollout { index: usize },

    #[error("rollout {index}: stored log-probability {stored} differs from recomputed {recomputed}")]
    LogProbMismatch {
        index: usize,
        stored: f64,
        recomputed: f64,
    },

    #[error("rollout {index}: importance weight is not finite (log-ratio {log_ratio})")]
    NonFiniteWeight { index: usize, log_ratio: f64 },

    #[error("weights must be nonempty, nonnegative and not all zero")]
    DegenerateWeights,

    #[error("rollout {index}: effective reward {reward} is negative under the lower-only bound")]
    NegativeReward { index: usize, reward: f64 },

    #[error("rollout {index}: exponent {exponent} of the upper bound exceeds the overflow guard")]
    ExponentOverflow { index: usize, exponent: f64 },

    #[error("rollout {index} carries no auxiliary signal")]
    MissingAuxSignal { index: usize },

    #[error("surrogate is not concave at the starting point (max Hessian eigenvalue {max_eigenvalue})")]
    NotConcave { max_eigenvalue: f64 },

    #[error("regularized Hessian is singular even with ridge {ridge}")]
    SingularHessian { ridge: f64 },

    #[error("surrogate is not finite at the anchor of iteration {iteration}")]
    NonFiniteSurrogate { iteration: usize },

    #[error("Lagrange multiplier diverged to {alpha} at iteration {iteration} (constraint gap {gap})")]
    DualDivergence { iteration: usize, alpha: f64, gap: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    LogIo(#[from] LogIoError),
}

/// Failures while reading or writing batch files.
#[derive(Debug, Error)]
pub enum LogIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: unsupported schema: {message}")]
    Schema { line: usize, message: String },

    #[error("line {line}: unknown policy family {name:?}")]
    UnknownFamily { line: usize, name: String },

    #[error("line {line}: dimension mismatch: expected {expected}, got {actual}")]
    Dimension {
        line: usize,
        expected: usize,
        actual: usize,
    },

    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },

    #[error("line {line}: stored log-probability {stored} differs from recomputed {recomputed}")]
    Verification {
        line: usize,
        stored: f64,
        recomputed: f64,
    },

    #[error("batch file contains no rollouts")]
    Empty,
}
