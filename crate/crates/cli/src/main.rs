//! `ipower` command-line front end: learning-curve experiments, the bandit
//! grid check, offline optimization of batch files, and self-tests.
//!
//! Exit codes: 0 on success, 1 on error or failed self-test, 3 when a
//! constrained optimization ends infeasible (its report is still written).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ipower::bounds::BranchRule;
use ipower::harness::{
    init_thread_pool_from_env, optimize_batch_file, run_bandit_oracle, run_learning_curve, write_rows_csv,
    write_summary_csv, ConstraintSettings, ExperimentConfig, OptimizeConfig, RunManifest,
};
use ipower::optimizer::NewtonConfig;
use ipower::selftest::run_selftest;
use serde::Deserialize;

const CONFIG_VERSION: u32 = 1;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "ipower", version, about = "Off-policy policy optimization experiments")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the batched cart-pole learning-curve experiment.
    Curve(CurveArgs),
    /// Compare the optimizer against grid search on a scalar bandit.
    Oracle(OracleArgs),
    /// Optimize a policy from a batch file.
    Optimize(OptimizeArgs),
    /// Run randomized checks of the core guarantees.
    Selftest(SelftestArgs),
}

/// Versioned TOML configuration. Both tables are optional; command-line
/// flags override file values.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    config_version: u32,
    curve: Option<ExperimentConfig>,
    optimize: Option<OptimizeConfig>,
}

fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: ConfigFile = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if cfg.config_version != CONFIG_VERSION {
        bail!(
            "{}: config_version {} is not supported (expected {CONFIG_VERSION})",
            path.display(),
            cfg.config_version
        );
    }
    Ok(cfg)
}

#[derive(Args)]
struct NewtonArgs {
    /// Newton steps per outer iteration.
    #[arg(long)]
    steps_per_iteration: Option<usize>,
    /// Largest allowed Newton step norm.
    #[arg(long)]
    max_step_norm: Option<f64>,
    /// Hessian regularization.
    #[arg(long)]
    ridge: Option<f64>,
    /// Disable backtracking line search.
    #[arg(long)]
    no_backtracking: bool,
}

impl NewtonArgs {
    fn apply(&self, cfg: &mut NewtonConfig) {
        if let Some(v) = self.steps_per_iteration {
            cfg.steps_per_iteration = v;
        }
        if let Some(v) = self.max_step_norm {
            cfg.max_step_norm = v;
        }
        if let Some(v) = self.ridge {
            cfg.ridge = v;
        }
        if self.no_backtracking {
            cfg.backtracking = false;
        }
    }
}

#[derive(Args)]
struct CapArgs {
    /// Importance weight cap.
    #[arg(long, conflicts_with = "no_weight_cap")]
    weight_cap: Option<f64>,
    /// Use uncapped importance weights.
    #[arg(long)]
    no_weight_cap: bool,
}

impl CapArgs {
    fn apply(&self, cap: &mut Option<f64>) {
        if self.no_weight_cap {
            *cap = None;
        } else if let Some(c) = self.weight_cap {
            *cap = Some(c);
        }
    }
}

#[derive(Args)]
struct CurveArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory receiving the CSV tables and the run manifest.
    #[arg(long, default_value = "curve-output")]
    out_dir: PathBuf,
    /// Batches per repetition.
    #[arg(long)]
    num_batches: Option<usize>,
    /// Rollouts collected per batch.
    #[arg(long)]
    rollouts_per_batch: Option<usize>,
    /// Maximum steps per rollout.
    #[arg(long)]
    rollout_length: Option<usize>,
    /// Independent repetitions per cell.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Comma-separated numbers of outer iterations.
    #[arg(long, value_delimiter = ',')]
    t_values: Option<Vec<usize>>,
    /// Comma-separated control-variate fractions in [0, 1].
    #[arg(long, value_delimiter = ',')]
    cv_fractions: Option<Vec<f64>>,
    #[command(flatten)]
    cap: CapArgs,
    /// Seed from which every rollout seed is derived.
    #[arg(long)]
    base_seed: Option<u64>,
    /// Surrogate branch rule: mixed or lower-only.
    #[arg(long, value_parser = parse_branch_rule)]
    branch_rule: Option<BranchRule>,
    #[command(flatten)]
    newton: NewtonArgs,
}

fn parse_branch_rule(s: &str) -> Result<BranchRule, String> {
    match s {
        "mixed" => Ok(BranchRule::Mixed),
        "lower-only" => Ok(BranchRule::LowerOnly),
        other => Err(format!("unknown branch rule {other:?} (expected mixed or lower-only)")),
    }
}

fn run_curve(args: &CurveArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?.curve.unwrap_or_default(),
        None => ExperimentConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {$(
            if let Some(v) = args.$field.clone() {
                cfg.$field = v;
            }
        )*};
    }
    set!(num_batches, rollouts_per_batch, rollout_length, repetitions, t_values, cv_fractions, base_seed, branch_rule);
    args.cap.apply(&mut cfg.weight_cap);
    args.newton.apply(&mut cfg.newton);
    cfg.validate()?;

    let results = run_learning_curve(&cfg)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let create = |name: &str| -> Result<fs::File> {
        let path = args.out_dir.join(name);
        fs::File::create(&path).with_context(|| format!("creating {}", path.display()))
    };
    write_rows_csv(&results.rows, create("curve_rows.csv")?)?;
    write_summary_csv(&results.summary, create("curve_summary.csv")?)?;
    let manifest = RunManifest::new("curve", cfg.base_seed, &cfg);
    serde_json::to_writer_pretty(create("manifest.json")?, &manifest)?;

    let failed = results.rows.iter().filter(|r| r.failed).count();
    println!("mean return at batch {} (± sd over {} repetitions)", cfg.num_batches, cfg.repetitions);
    for s in results.summary.iter().filter(|s| s.batch == cfg.num_batches) {
        println!("  T={:<3} cv={:<5} {:8.2} ± {:.2}", s.t, s.cv_fraction, s.mean, s.std);
    }
    if failed > 0 {
        println!("{failed} cell updates failed; see the failed column");
    }
    println!("tables written to {}", args.out_dir.display());
    Ok(())
}

#[derive(Args)]
struct OracleArgs {
    /// Grid spacing over θ ∈ [−6, 6].
    #[arg(long, default_value_t = 1e-4)]
    resolution: f64,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

fn run_oracle(args: &OracleArgs) -> Result<()> {
    let rep = run_bandit_oracle(args.resolution)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&rep)?);
        return Ok(());
    }
    println!("grid argmax      θ* = {:.6}   j(θ*) = {:.9}", rep.theta_star, rep.j_star);
    println!("after T = {:<3}   θ_T = {:.6}   j(θ_T) = {:.9}", rep.iterations, rep.theta_t, rep.j_t);
    println!("|θ_T − θ*| = {:.3e}   |j(θ_T) − j(θ*)| = {:.3e}", rep.theta_error, rep.j_error);
    if rep.flat {
        println!("note: the estimate is flat over the grid");
    }
    if rep.boundary {
        println!("note: the grid maximum lies on the edge of the range");
    }
    Ok(())
}

#[derive(Args)]
struct OptimizeArgs {
    /// Batch file (line-delimited JSON).
    #[arg(long)]
    input: PathBuf,
    /// Per-iteration report (line-delimited JSON).
    #[arg(long)]
    report: PathBuf,
    /// Output parameter file; defaults to the report path with a
    /// `.params.json` extension.
    #[arg(long)]
    params: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of outer iterations T.
    #[arg(long)]
    iterations: Option<usize>,
    #[command(flatten)]
    cap: CapArgs,
    /// Fraction of the variance-minimizing control variate.
    #[arg(long)]
    cv_fraction: Option<f64>,
    /// Fixed control variate; disables per-iteration recomputation.
    #[arg(long)]
    control_variate: Option<f64>,
    /// Surrogate branch rule: mixed or lower-only.
    #[arg(long, value_parser = parse_branch_rule)]
    branch_rule: Option<BranchRule>,
    #[command(flatten)]
    newton: NewtonArgs,
    /// Enforce E[aux_signal] = TARGET.
    #[arg(long)]
    constraint_target: Option<f64>,
    /// Dual ascent step size; defaults to 0.1 / |TARGET|.
    #[arg(long)]
    dual_step_size: Option<f64>,
    /// Maximum dual ascent steps per outer iteration.
    #[arg(long)]
    max_dual_steps: Option<usize>,
    /// Relative constraint gap at which dual ascent stops within an iteration.
    #[arg(long)]
    dual_tolerance: Option<f64>,
    /// Relative tolerance for reporting the constraint as met.
    #[arg(long)]
    feasibility_tolerance: Option<f64>,
}

fn run_optimize(args: &OptimizeArgs) -> Result<ExitCode> {
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?.optimize.unwrap_or_default(),
        None => OptimizeConfig::default(),
    };
    let opt = &mut cfg.optimizer;
    if let Some(t) = args.iterations {
        opt.iterations = t;
    }
    args.cap.apply(&mut opt.estimator.weight_cap);
    if let Some(c) = args.cv_fraction {
        opt.estimator.cv_fraction = c;
    }
    if let Some(b) = args.control_variate {
        opt.estimator.control_variate = b;
        opt.recompute_cv_each_iteration = false;
    }
    if let Some(r) = args.branch_rule {
        opt.branch_rule = r;
    }
    args.newton.apply(&mut opt.newton);
    if let Some(target) = args.constraint_target {
        let existing = cfg.constraint.take().map(|c| c.multiplier).unwrap_or_default();
        cfg.constraint = Some(ConstraintSettings { target, multiplier: existing });
    }
    if let Some(c) = cfg.constraint.as_mut() {
        let m = &mut c.multiplier;
        if let Some(v) = args.dual_step_size {
            m.step_size = Some(v);
        }
        if let Some(v) = args.max_dual_steps {
            m.max_dual_steps = v;
        }
        if let Some(v) = args.dual_tolerance {
            m.dual_tolerance = v;
        }
        if let Some(v) = args.feasibility_tolerance {
            m.feasibility_tolerance = v;
        }
    }

    let params = args.params.clone().unwrap_or_else(|| args.report.with_extension("params.json"));
    let outcome = optimize_batch_file(&args.input, &cfg, &args.report, &params)?;
    let r = &outcome.report;
    println!("initial estimate {:.6}, final estimate {:.6} after {} iterations", r.initial_j_hat, r.final_j_hat(), r.records.len());
    println!("report: {}", outcome.report_path.display());
    println!("parameters: {}", outcome.params_path.display());
    if let Some(gap) = r.records.last().and_then(|rec| rec.constraint_gap) {
        println!("constraint gap {gap:.3e}");
    }
    if !outcome.is_feasible() {
        eprintln!("constraint not satisfied within the tolerance");
        return Ok(ExitCode::from(EXIT_INFEASIBLE));
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
struct SelftestArgs {
    /// Seed for the random instances.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random instances per check.
    #[arg(long, default_value_t = 200)]
    instances: usize,
}

fn run_selftests(args: &SelftestArgs) -> ExitCode {
    let results = run_selftest(args.seed, args.instances);
    let mut ok = true;
    for r in &results {
        match &r.failure {
            None => println!("PASS  {} ({} instances)", r.name, r.instances),
            Some(f) => {
                ok = false;
                println!("FAIL  {}: {f}", r.name);
            }
        }
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    init_thread_pool_from_env()?;
    match &cli.command {
        Command::Curve(a) => run_curve(a).map(|()| ExitCode::SUCCESS),
        Command::Oracle(a) => run_oracle(a).map(|()| ExitCode::SUCCESS),
        Command::Optimize(a) => run_optimize(a),
        Command::Selftest(a) => Ok(run_selftests(a)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
