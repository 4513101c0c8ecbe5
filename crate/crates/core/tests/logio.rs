use std::io::Write;
use std::sync::Arc;

use ipower::cartpole::{run_rollouts, CartpolePhysics};
use ipower::error::LogIoError;
use ipower::estimator::{j_hat, EstimatorConfig};
use ipower::logio::{read_batch, read_params, write_batch, write_params};
use ipower::policy::{BernoulliLogistic, PolicyParams};
use ipower::trajectory::{importance_weights, LoggedBatch};

fn cartpole_batch(count: usize) -> LoggedBatch {
    let pol = BernoulliLogistic::new(4);
    let th = PolicyParams::new(vec![0.05, 0.3, 3.0, 0.5]).unwrap();
    let rs = run_rollouts(&pol, &th, count, 400, 21, &CartpolePhysics::default()).unwrap();
    LoggedBatch::new(Arc::new(pol), th, rs).unwrap()
}

#[test]
fn large_batch_round_trip_preserves_estimates() {
    let batch = cartpole_batch(1000);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.jsonl");
    write_batch(&batch, &path).unwrap();
    let back = read_batch(&path).unwrap();
    let eval = PolicyParams::new(vec![0.0, 0.4, 3.5, 0.6]).unwrap();
    let cfg = EstimatorConfig { weight_cap: Some(20.0), ..Default::default() };
    let (a, b) = (j_hat(&batch, &eval, &cfg).unwrap(), j_hat(&back, &eval, &cfg).unwrap());
    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    assert!(importance_weights(&back, back.logging_params(), None).unwrap().iter().all(|&w| w == 1.0));
}

#[test]
fn truncated_file_names_the_bad_line() {
    let batch = cartpole_batch(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.jsonl");
    write_batch(&batch, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let cut = &text[..text.trim_end().len() - 10];
    std::fs::File::create(&path).unwrap().write_all(cut.as_bytes()).unwrap();
    match read_batch(&path) {
        Err(LogIoError::Malformed { line, .. }) => assert_eq!(line, 4),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn params_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    let th = PolicyParams::new(vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0]).unwrap();
    write_params(&path, &BernoulliLogistic::new(4), &th).unwrap();
    let back = read_params(&path).unwrap();
    assert_eq!(back.theta, th.to_vec());
    assert_eq!(back.policy_family, "bernoulli_logistic");
}
