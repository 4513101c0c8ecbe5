//! Experiment orchestration: batched learning curves on cart-pole, a scalar
//! bandit checked against grid search, and offline optimization of batch
//! files.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::BranchRule;
use crate::cartpole::{run_rollouts, CartpolePhysics};
use crate::error::{Error, LogIoError, Result};
use crate::estimator::{j_hat, EstimatorConfig};
use crate::logio::{read_batch, write_params};
use crate::numeric::{mean_and_variance, pairwise_sum};
use crate::optimizer::{
    constrained_iterative_power, iterative_power, IterPowerConfig, MultiplierConfig, NewtonConfig,
    OptimizationReport,
};
use crate::policy::{BernoulliLogistic, Policy, PolicyParams, StepObservation};
use crate::trajectory::{LoggedBatch, Rollout};

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Newton step clamp used by the cart-pole experiment. Longer steps drive
/// the policy into regions where the capped weights carry little
/// information and learning stalls.
pub const CARTPOLE_MAX_STEP_NORM: f64 = 0.2;

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "IPOWER_THREADS";

/// Sizes the global thread pool from [`THREADS_ENV`] if it is set.
pub fn init_thread_pool_from_env() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub num_batches: usize,
    pub rollouts_per_batch: usize,
    pub rollout_length: usize,
    pub repetitions: usize,
    pub t_values: Vec<usize>,
    pub cv_fractions: Vec<f64>,
    pub weight_cap: Option<f64>,
    pub base_seed: u64,
    pub newton: NewtonConfig,
    pub branch_rule: BranchRule,
    pub physics: CartpolePhysics,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            num_batches: 10,
            rollouts_per_batch: 25,
            rollout_length: 400,
            repetitions: 20,
            t_values: vec![1, 2, 5, 10, 20],
            cv_fractions: vec![0.0, 0.25, 0.5, 0.99],
            weight_cap: Some(20.0),
            base_seed: 0,
            newton: NewtonConfig {
                max_step_norm: CARTPOLE_MAX_STEP_NORM,
                ..NewtonConfig::default()
            },
            branch_rule: BranchRule::Mixed,
            physics: CartpolePhysics::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_batches", self.num_batches),
            ("rollouts_per_batch", self.rollouts_per_batch),
            ("rollout_length", self.rollout_length),
            ("repetitions", self.repetitions),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.t_values.is_empty() || self.t_values.contains(&0) {
            return Err(Error::Config("T values must be nonempty and at least 1".into()));
        }
        if self.cv_fractions.is_empty() || self.cv_fractions.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::Config("cv fractions must be nonempty and lie in [0, 1]".into()));
        }
        if let Some(cap) = self.weight_cap {
            if !(cap > 0.0) {
                return Err(Error::Config("weight cap must be positive".into()));
            }
        }
        self.newton.validate()?;
        self.physics.validate()
    }

    /// Seed of rollout `index` of `batch` in `repetition`. Independent of the
    /// (T, cv) cell, so every cell sees the same random streams.
    pub fn rollout_seed(&self, repetition: usize, batch: usize, index: usize) -> u64 {
        let global = (repetition * self.num_batches + batch) * self.rollouts_per_batch + index;
        self.base_seed.wrapping_add(global as u64)
    }

    fn optimizer_config(&self, iterations: usize, cv_fraction: f64) -> IterPowerConfig {
        IterPowerConfig {
            iterations,
            newton: self.newton,
            estimator: EstimatorConfig {
                weight_cap: self.weight_cap,
                cv_fraction,
                ..Default::default()
            },
            recompute_cv_each_iteration: true,
            branch_rule: self.branch_rule,
        }
    }
}

/// One row of the learning-curve table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: usize,
    pub cv_fraction: f64,
    pub repetition: usize,
    /// 1-based batch index.
    pub batch: usize,
    /// Mean return of the rollouts gathered in this batch.
    pub mean_return: f64,
    /// Surrogate value after the update that follows this batch.
    pub surrogate_value: f64,
    pub ess: f64,
    pub weight_max: f64,
    pub failed: bool,
}

/// Mean and standard deviation of `mean_return` across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub t: usize,
    pub cv_fraction: f64,
    pub batch: usize,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

impl CurveSummary {
    pub fn standard_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResults {
    pub rows: Vec<CurveRow>,
    pub summary: Vec<CurveSummary>,
}

impl CurveResults {
    pub fn cell(&self, t: usize, cv_fraction: f64, batch: usize) -> Option<&CurveSummary> {
        self.summary
            .iter()
            .find(|s| s.t == t && s.cv_fraction == cv_fraction && s.batch == batch)
    }
}

fn run_cell(config: &ExperimentConfig, t: usize, cv: f64, repetition: usize) -> Vec<CurveRow> {
    let policy = Arc::new(BernoulliLogistic::new(4));
    let opt = config.optimizer_config(t, cv);
    let mut theta = PolicyParams::zeros(4);
    let mut rows = Vec::with_capacity(config.num_batches);
    for batch in 0..config.num_batches {
        let rollouts = match run_rollouts(
            &policy,
            &theta,
            config.rollouts_per_batch,
            config.rollout_length,
            config.rollout_seed(repetition, batch, 0),
            &config.physics,
        ) {
            Ok(r) => r,
            Err(e) => {
                warn!("cell T={t} cv={cv} rep={repetition}: rollout failed: {e}");
                break;
            }
        };
        let returns: Vec<f64> = rollouts.iter().map(|r| r.reward).collect();
        let mean_return = pairwise_sum(&returns) / returns.len() as f64;
        let outcome = LoggedBatch::new(policy.clone(), theta.clone(), rollouts)
            .and_then(|b| iterative_power(&b, &opt));
        match outcome {
            Ok(report) => {
                let last = report.records.last().expect("at least one iteration");
                rows.push(CurveRow {
                    t,
                    cv_fraction: cv,
                    repetition,
                    batch: batch + 1,
                    mean_return,
                    surrogate_value: last.surrogate_value,
                    ess: last.ess,
                    weight_max: last.weight_max,
                    failed: false,
                });
                theta = report.final_theta;
            }
            Err(e) => {
                warn!("cell T={t} cv={cv} rep={repetition} batch={}: {e}", batch + 1);
                rows.push(CurveRow {
                    t,
                    cv_fraction: cv,
                    repetition,
                    batch: batch + 1,
                    mean_return,
                    surrogate_value: f64::NAN,
                    ess: f64::NAN,
                    weight_max: f64::NAN,
                    failed: true,
                });
                break;
            }
        }
    }
    rows
}

/// Runs the batched learning-curve experiment for every (T, cv) cell.
///
/// Each repetition starts from `θ = 0`; after each batch of rollouts the
/// parameters are replaced by the result of [`iterative_power`] on that
/// batch alone.
pub fn run_learning_curve(config: &ExperimentConfig) -> Result<CurveResults> {
    config.validate()?;
    let mut cells = Vec::new();
    for &t in &config.t_values {
        for &cv in &config.cv_fractions {
            for rep in 0..config.repetitions {
                cells.push((t, cv, rep));
            }
        }
    }
    info!("running {} learning-curve cells", cells.len());
    let rows: Vec<CurveRow> = cells
        .par_iter()
        .map(|&(t, cv, rep)| run_cell(config, t, cv, rep))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let mut summary = Vec::new();
    for &t in &config.t_values {
        for &cv in &config.cv_fractions {
            for batch in 1..=config.num_batches {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.t == t && r.cv_fraction == cv && r.batch == batch)
                    .map(|r| r.mean_return)
                    .collect();
                let (mean, var) = mean_and_variance(&values);
                summary.push(CurveSummary {
                    t,
                    cv_fraction: cv,
                    batch,
                    count: values.len(),
                    mean,
                    std: var.sqrt(),
                });
            }
        }
    }
    Ok(CurveResults { rows, summary })
}

pub fn write_rows_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    write_csv(rows, out)
}

pub fn write_summary_csv<W: Write>(summary: &[CurveSummary], out: W) -> Result<()> {
    write_csv(summary, out)
}

fn write_csv<T: Serialize, W: Write>(items: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for item in items {
        w.serialize(item).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Echo of a run for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub csv_schema_version: u32,
    pub command: String,
    pub code_version: String,
    pub base_seed: u64,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, base_seed: u64, config: &impl Serialize) -> Self {
        Self {
            csv_schema_version: CSV_SCHEMA_VERSION,
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            base_seed,
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
        }
    }
}

/// One-step logistic bandit with scalar parameter: each entry is
/// `(feature, action, reward)`, logged at `θ₀ = 0`.
pub fn bandit_batch(entries: &[(f64, usize, f64)]) -> Result<LoggedBatch> {
    bandit_batch_with_aux(&entries.iter().map(|&(s, a, r)| (s, a, r, None)).collect::<Vec<_>>())
}

pub fn bandit_batch_with_aux(entries: &[(f64, usize, f64, Option<f64>)]) -> Result<LoggedBatch> {
    let policy: Arc<dyn Policy> = Arc::new(BernoulliLogistic::new(1));
    let th0 = PolicyParams::zeros(1);
    let rollouts = entries
        .iter()
        .map(|&(s, a, r, aux)| {
            Rollout::from_policy(policy.as_ref(), &th0, vec![StepObservation::new(vec![s], a)], r, aux)
        })
        .collect::<Result<Vec<_>>>()?;
    LoggedBatch::new(policy, th0, rollouts)
}

/// The mixed-sign two-rollout bandit used by [`run_bandit_oracle`]: the
/// estimate is `−σ(θ) + 2σ(3θ)`, which peaks inside `[−6, 6]`.
pub fn mixed_sign_bandit() -> LoggedBatch {
    bandit_batch(&[(1.0, 1, -1.0), (3.0, 1, 2.0)]).expect("valid bandit batch")
}

pub const ORACLE_RANGE: (f64, f64) = (-6.0, 6.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub resolution: f64,
    pub iterations: usize,
    pub theta_star: f64,
    pub j_star: f64,
    pub theta_t: f64,
    pub j_t: f64,
    pub theta_error: f64,
    pub j_error: f64,
    /// The estimate does not vary over the grid.
    pub flat: bool,
    /// The grid maximum sits on the edge of the range.
    pub boundary: bool,
}

/// Compares [`iterative_power`] (uncapped, no control variate) against a
/// grid search of the estimate over `θ ∈ [−6, 6]`.
pub fn run_bandit_oracle_on(batch: &LoggedBatch, resolution: f64, iterations: usize) -> Result<OracleReport> {
    if !(resolution > 0.0) {
        return Err(Error::Config("resolution must be positive".into()));
    }
    if batch.policy().param_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: batch.policy().param_dim(),
        });
    }
    let plain = EstimatorConfig::default();
    let (lo, hi) = ORACLE_RANGE;
    let points = ((hi - lo) / resolution).round() as usize;
    let mut theta_star = lo;
    let mut j_star = f64::NEG_INFINITY;
    let mut j_min = f64::INFINITY;
    for k in 0..=points {
        let th = lo + k as f64 * resolution;
        let j = j_hat(batch, &PolicyParams::new(vec![th])?, &plain)?;
        if j > j_star {
            j_star = j;
            theta_star = th;
        }
        j_min = j_min.min(j);
    }
    let config = IterPowerConfig {
        iterations,
        estimator: plain,
        recompute_cv_each_iteration: false,
        ..Default::default()
    };
    let report = iterative_power(batch, &config)?;
    let theta_t = report.final_theta.as_slice()[0];
    let j_t = j_hat(batch, &report.final_theta, &plain)?;
    Ok(OracleReport {
        resolution,
        iterations,
        theta_star,
        j_star,
        theta_t,
        j_t,
        theta_error: (theta_t - theta_star).abs(),
        j_error: (j_t - j_star).abs(),
        flat: j_star - j_min <= 1e-12 * (1.0 + j_star.abs()),
        boundary: theta_star <= lo + 0.5 * resolution || theta_star >= hi - 0.5 * resolution,
    })
}

/// Grid check on [`mixed_sign_bandit`] with `T = 50`.
pub fn run_bandit_oracle(resolution: f64) -> Result<OracleReport> {
    run_bandit_oracle_on(&mixed_sign_bandit(), resolution, 50)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSettings {
    pub target: f64,
    #[serde(default)]
    pub multiplier: MultiplierConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeConfig {
    pub optimizer: IterPowerConfig,
    pub constraint: Option<ConstraintSettings>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutcome {
    pub report: OptimizationReport,
    pub report_path: PathBuf,
    pub params_path: PathBuf,
}

impl OptimizeOutcome {
    /// False only for a constrained run that ended infeasible.
    pub fn is_feasible(&self) -> bool {
        self.report.feasible.unwrap_or(true)
    }
}

#[derive(Serialize)]
struct ReportHeader<'a> {
    schema_version: u32,
    initial_theta: &'a [f64],
    initial_j_hat: f64,
    final_theta: Vec<f64>,
    feasible: Option<bool>,
}

/// Reads a batch file, optimizes it, and writes the per-iteration report
/// (line-delimited JSON, one summary line then one line per iteration) to
/// `report_path` and the final parameters to `params_path`.
pub fn optimize_batch_file(
    input: &Path,
    config: &OptimizeConfig,
    report_path: &Path,
    params_path: &Path,
) -> Result<OptimizeOutcome> {
    config.optimizer.validate()?;
    let batch = read_batch(input)?;
    let report = match &config.constraint {
        Some(c) => constrained_iterative_power(&batch, &config.optimizer, c.target, &c.multiplier)?,
        None => iterative_power(&batch, &config.optimizer)?,
    };

    let io = |source| {
        Error::LogIo(LogIoError::Io {
            path: report_path.to_path_buf(),
            source,
        })
    };
    let mut text = String::new();
    let header = ReportHeader {
        schema_version: crate::logio::SCHEMA_VERSION,
        initial_theta: &report.initial_theta,
        initial_j_hat: report.initial_j_hat,
        final_theta: report.final_theta.to_vec(),
        feasible: report.feasible,
    };
    let encode = |e: serde_json::Error| Error::InvalidInput(e.to_string());
    text.push_str(&serde_json::to_string(&header).map_err(encode)?);
    text.push('\n');
    for r in &report.records {
        text.push_str(&serde_json::to_string(r).map_err(encode)?);
        text.push('\n');
    }
    std::fs::write(report_path, text).map_err(io)?;
    write_params(params_path, batch.policy(), &report.final_theta)?;

    Ok(OptimizeOutcome {
        report,
        report_path: report_path.to_path_buf(),
        params_path: params_path.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_do_not_depend_on_cell_and_never_collide() {
        let cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for rep in 0..cfg.repetitions {
            for b in 0..cfg.num_batches {
                for i in 0..cfg.rollouts_per_batch {
                    assert!(seen.insert(cfg.rollout_seed(rep, b, i)));
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig {
            t_values: vec![0, 1],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            weight_cap: Some(-1.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            cv_fractions: vec![1.2],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn flat_bandit_is_flagged() {
        let b = bandit_batch(&[(1.0, 1, 1.0), (1.0, 0, 1.0)]).unwrap();
        let rep = run_bandit_oracle_on(&b, 1e-2, 5).unwrap();
        assert!(rep.flat);
    }

    #[test]
    fn monotone_bandit_hits_the_boundary() {
        // σ(θ)/σ(0) grows with θ, so the grid maximum is the right edge.
        let b = bandit_batch(&[(1.0, 1, 1.0)]).unwrap();
        let rep = run_bandit_oracle_on(&b, 1e-3, 50).unwrap();
        assert!(rep.boundary);
        assert!((rep.theta_star - 6.0).abs() < 1e-9);
        assert!(rep.theta_t > 6.0);
        assert!(rep.j_t >= rep.j_star);
    }
}
