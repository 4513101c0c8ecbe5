use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use ipower::cartpole::{run_rollouts, CartpolePhysics};
use ipower::harness::bandit_batch_with_aux;
use ipower::logio::{read_params, write_batch};
use ipower::policy::{BernoulliLogistic, PolicyParams};
use ipower::trajectory::LoggedBatch;

fn ipower(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipower"))
        .args(args)
        .env("IPOWER_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_curve(dir: &Path) -> Output {
    ipower(&[
        "curve",
        "--out-dir",
        dir.to_str().unwrap(),
        "--num-batches",
        "2",
        "--repetitions",
        "2",
        "--t-values",
        "1,5",
        "--cv-fractions",
        "0,0.99",
        "--base-seed",
        "17",
    ])
}

#[test]
fn curve_output_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(small_curve(a.path()).status.success());
    assert!(small_curve(b.path()).status.success());
    for name in ["curve_rows.csv", "curve_summary.csv", "manifest.json"] {
        let (x, y) = (std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap());
        assert_eq!(x, y, "{name} differs");
    }
    let rows = std::fs::read_to_string(a.path().join("curve_rows.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 2 * 2 * 2 * 2);
}

#[test]
fn config_file_is_versioned() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "config_version = 2\n").unwrap();
    let out = ipower(&["curve", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config_version"));

    std::fs::write(
        &cfg,
        "config_version = 1\n[curve]\nnum_batches = 1\nrepetitions = 1\nt_values = [2]\ncv_fractions = [0.5]\n",
    )
    .unwrap();
    let out = ipower(&["curve", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("T=2"));
}

#[test]
fn oracle_reports_small_error() {
    let out = ipower(&["oracle", "--resolution", "1e-3", "--json"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("\"j_error\""));
    assert!(text.contains("\"flat\": false"));
}

#[test]
fn selftest_passes() {
    let out = ipower(&["selftest", "--instances", "30"]);
    assert!(out.status.success(), "{}", stdout(&out));
    assert_eq!(stdout(&out).matches("PASS").count(), 4);
}

#[test]
fn optimize_writes_report_and_params() {
    let dir = tempfile::tempdir().unwrap();
    let pol = BernoulliLogistic::new(4);
    let th = PolicyParams::zeros(4);
    let rs = run_rollouts(&pol, &th, 25, 400, 5, &CartpolePhysics::default()).unwrap();
    let batch = LoggedBatch::new(Arc::new(pol), th, rs).unwrap();
    let input = dir.path().join("batch.jsonl");
    write_batch(&batch, &input).unwrap();
    let report = dir.path().join("report.jsonl");
    let out = ipower(&[
        "optimize",
        "--input",
        input.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--iterations",
        "3",
        "--weight-cap",
        "20",
        "--cv-fraction",
        "0.99",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&report).unwrap().lines().count(), 4);
    let params = read_params(report.with_extension("params.json")).unwrap();
    assert_eq!(params.theta.len(), 4);
}

#[test]
fn optimize_signals_infeasible_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let batch = bandit_batch_with_aux(&[(1.0, 1, -1.0, Some(1.0)), (3.0, 1, 2.0, Some(1.0))]).unwrap();
    let input = dir.path().join("b.jsonl");
    write_batch(&batch, &input).unwrap();
    let report = dir.path().join("r.jsonl");
    let args = |target: &str| {
        ipower(&[
            "optimize",
            "--input",
            input.to_str().unwrap(),
            "--report",
            report.to_str().unwrap(),
            "--iterations",
            "5",
            "--constraint-target",
            target,
        ])
    };
    // The cost estimate σ(θ) + σ(3θ) lies in (0, 2).
    let out = args("3.0");
    assert_eq!(out.status.code(), Some(3));
    assert!(report.exists());
    let out = args("1.2");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn optimize_reports_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = ipower(&[
        "optimize",
        "--input",
        dir.path().join("nope.jsonl").to_str().unwrap(),
        "--report",
        dir.path().join("r.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.jsonl"));
}
