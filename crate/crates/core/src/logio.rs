//! Line-delimited JSON batch files.
//!
//! The first line is a [`BatchFileHeader`]; every following line is one
//! rollout:
//!
//! ```text
//! {"schema_version":1,"policy_family":"bernoulli_logistic","param_dim":4,"logging_theta":[0.0,0.0,0.0,0.0]}
//! {"steps":[{"state":[0.01,-0.02,0.03,0.0],"action":1}],"reward":1.0,"aux_signal":null,"log_prob_logging":-0.6931471805599453}
//! ```
//!
//! Reals are written in shortest round-trip form and parsed with correct
//! rounding, so a write/read cycle is bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::LogIoError;
use crate::policy::{family_from_name, Policy, PolicyParams};
use crate::trajectory::{LoggedBatch, Rollout};

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance when re-verifying stored logging log-probabilities on read.
pub const READ_LOG_PROB_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFileHeader {
    pub schema_version: u32,
    pub policy_family: String,
    pub param_dim: usize,
    pub logging_theta: Vec<f64>,
}

impl BatchFileHeader {
    pub fn new(policy: &dyn Policy, logging_params: &PolicyParams) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            policy_family: policy.name().to_string(),
            param_dim: logging_params.dim(),
            logging_theta: logging_params.to_vec(),
        }
    }
}

/// Parameter file written after optimization; same layout as a batch header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub schema_version: u32,
    pub policy_family: String,
    pub param_dim: usize,
    pub theta: Vec<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LogIoError + '_ {
    move |source| LogIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn to_line<T: Serialize>(value: &T, line: usize) -> Result<String, LogIoError> {
    serde_json::to_string(value).map_err(|e| LogIoError::Malformed {
        line,
        message: e.to_string(),
    })
}

/// Streams a batch file: header first, then one rollout per call.
pub struct BatchWriter<W: Write> {
    out: W,
    line: usize,
}

impl<W: Write> BatchWriter<W> {
    pub fn new(mut out: W, header: &BatchFileHeader) -> std::io::Result<Self> {
        let text = to_line(header, 1).map_err(std::io::Error::other)?;
        writeln!(out, "{text}")?;
        Ok(Self { out, line: 1 })
    }

    pub fn write_rollout(&mut self, rollout: &Rollout) -> std::io::Result<()> {
        self.line += 1;
        let text = to_line(rollout, self.line).map_err(std::io::Error::other)?;
        writeln!(self.out, "{text}")
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_batch_to<W: Write>(batch: &LoggedBatch, out: W) -> std::io::Result<W> {
    let header = BatchFileHeader::new(batch.policy(), batch.logging_params());
    let mut writer = BatchWriter::new(out, &header)?;
    for r in batch.rollouts() {
        writer.write_rollout(r)?;
    }
    writer.finish()
}

pub fn write_batch(batch: &LoggedBatch, path: impl AsRef<Path>) -> Result<(), LogIoError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(io_err(path))?;
    write_batch_to(batch, BufWriter::new(file)).map_err(io_err(path))?;
    Ok(())
}

fn parse_header(text: &str) -> Result<BatchFileHeader, LogIoError> {
    let header: BatchFileHeader = serde_json::from_str(text).map_err(|e| LogIoError::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(LogIoError::Schema {
            line: 1,
            message: format!(
                "schema_version {} (expected {SCHEMA_VERSION})",
                header.schema_version
            ),
        });
    }
    if header.param_dim != header.logging_theta.len() {
        return Err(LogIoError::Schema {
            line: 1,
            message: format!(
                "param_dim {} does not match logging_theta of length {}",
                header.param_dim,
                header.logging_theta.len()
            ),
        });
    }
    Ok(header)
}

fn check_rollout(policy: &dyn Policy, params: &PolicyParams, r: &Rollout, line: usize) -> Result<(), LogIoError> {
    let malformed = |message: String| LogIoError::Malformed { line, message };
    if r.steps.is_empty() {
        return Err(malformed("rollout has no steps".into()));
    }
    if !r.reward.is_finite() || r.aux_signal.is_some_and(|s| !s.is_finite()) {
        return Err(malformed("non-finite reward or auxiliary signal".into()));
    }
    for obs in &r.steps {
        if obs.state.len() != policy.state_dim() {
            return Err(LogIoError::Dimension {
                line,
                expected: policy.state_dim(),
                actual: obs.state.len(),
            });
        }
        if obs.action >= policy.num_actions() {
            return Err(malformed(format!("action {} out of range", obs.action)));
        }
    }
    let recomputed = policy
        .log_prob_rollout(params, &r.steps)
        .map_err(|e| malformed(e.to_string()))?;
    if !((recomputed - r.log_prob_logging).abs() <= READ_LOG_PROB_TOLERANCE) {
        return Err(LogIoError::Verification {
            line,
            stored: r.log_prob_logging,
            recomputed,
        });
    }
    Ok(())
}

pub fn read_batch_from<R: BufRead>(input: R) -> Result<LoggedBatch, LogIoError> {
    let mut lines = input.lines().enumerate();
    let read_err = |source| LogIoError::Io {
        path: "<stream>".into(),
        source,
    };
    let header_text = match lines.next() {
        Some((_, text)) => text.map_err(read_err)?,
        None => {
            return Err(LogIoError::Malformed {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let header = parse_header(&header_text)?;
    let policy = family_from_name(&header.policy_family, header.param_dim).ok_or_else(|| {
        LogIoError::UnknownFamily {
            line: 1,
            name: header.policy_family.clone(),
        }
    })?;
    let params = PolicyParams::new(header.logging_theta.clone()).map_err(|e| LogIoError::Schema {
        line: 1,
        message: e.to_string(),
    })?;

    let mut rollouts = Vec::new();
    for (idx, text) in lines {
        let line = idx + 1;
        let text = text.map_err(read_err)?;
        if text.trim().is_empty() {
            continue;
        }
        let rollout: Rollout = serde_json::from_str(&text).map_err(|e| LogIoError::Malformed {
            line,
            message: e.to_string(),
        })?;
        check_rollout(policy.as_ref(), &params, &rollout, line)?;
        rollouts.push(rollout);
    }
    if rollouts.is_empty() {
        return Err(LogIoError::Empty);
    }
    LoggedBatch::with_tolerance(policy, params, rollouts, READ_LOG_PROB_TOLERANCE).map_err(|e| {
        LogIoError::Malformed {
            line: 0,
            message: e.to_string(),
        }
    })
}

pub fn read_batch(path: impl AsRef<Path>) -> Result<LoggedBatch, LogIoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_err(path))?;
    read_batch_from(BufReader::new(file)).map_err(|e| match e {
        LogIoError::Io { source, .. } => LogIoError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn write_params(
    path: impl AsRef<Path>,
    policy: &dyn Policy,
    params: &PolicyParams,
) -> Result<(), LogIoError> {
    let path = path.as_ref();
    let body = ParamsFile {
        schema_version: SCHEMA_VERSION,
        policy_family: policy.name().to_string(),
        param_dim: params.dim(),
        theta: params.to_vec(),
    };
    let text = to_line(&body, 1)?;
    std::fs::write(path, format!("{text}\n")).map_err(io_err(path))
}

pub fn read_params(path: impl AsRef<Path>) -> Result<ParamsFile, LogIoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let first = text.lines().next().unwrap_or("");
    let body: ParamsFile = serde_json::from_str(first).map_err(|e| LogIoError::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    if body.schema_version != SCHEMA_VERSION || body.param_dim != body.theta.len() {
        return Err(LogIoError::Schema {
            line: 1,
            message: "inconsistent parameter file header".into(),
        });
    }
    Ok(body)
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;
    use std::sync::Arc;

    use super::*;
    use crate::policy::{BernoulliLogistic, StepObservation};

    fn small_batch() -> LoggedBatch {
        let pol: Arc<dyn Policy> = Arc::new(BernoulliLogistic::new(2));
        let th0 = PolicyParams::new(vec![0.1 + 0.2, -1.0 / 3.0]).unwrap();
        let r = Rollout::from_policy(
            pol.as_ref(),
            &th0,
            vec![
                StepObservation::new(vec![0.1, std::f64::consts::PI], 1),
                StepObservation::new(vec![-1e-300, 7.0e22], 0),
            ],
            -2.5e-7,
            Some(1.0 / 7.0),
        )
        .unwrap();
        LoggedBatch::new(pol, th0, vec![r]).unwrap()
    }

    fn to_text(batch: &LoggedBatch) -> String {
        String::from_utf8(write_batch_to(batch, Vec::new()).unwrap()).unwrap()
    }

    #[test]
    fn single_rollout_round_trip_is_bit_exact() {
        let b = small_batch();
        let back = read_batch_from(Cursor::new(to_text(&b))).unwrap();
        assert_eq!(back.rollouts(), b.rollouts());
        assert_eq!(back.logging_params(), b.logging_params());
        let bits = |r: &Rollout| r.log_prob_logging.to_bits();
        assert_eq!(bits(&back.rollouts()[0]), bits(&b.rollouts()[0]));
    }

    #[test]
    fn header_only_file_is_empty() {
        let b = small_batch();
        let header = BatchFileHeader::new(b.policy(), b.logging_params());
        let out = BatchWriter::new(Vec::new(), &header).unwrap().finish().unwrap();
        assert_eq!(String::from_utf8(out.clone()).unwrap().lines().count(), 1);
        assert!(matches!(read_batch_from(Cursor::new(out)), Err(LogIoError::Empty)));
    }

    #[test]
    fn header_dimension_mismatch_is_schema_error() {
        let text = "{\"schema_version\":1,\"policy_family\":\"bernoulli_logistic\",\"param_dim\":3,\"logging_theta\":[0.0,0.0]}\n";
        assert!(matches!(
            read_batch_from(Cursor::new(text)),
            Err(LogIoError::Schema { line: 1, .. })
        ));
        let text = text.replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(matches!(
            read_batch_from(Cursor::new(text)),
            Err(LogIoError::Schema { line: 1, .. })
        ));
    }

    #[test]
    fn unknown_family_is_named() {
        let text = "{\"schema_version\":1,\"policy_family\":\"gaussian\",\"param_dim\":1,\"logging_theta\":[0.0]}\n";
        assert!(matches!(
            read_batch_from(Cursor::new(text)),
            Err(LogIoError::UnknownFamily { .. })
        ));
    }

    #[test]
    fn truncated_last_line_names_the_line() {
        let mut text = to_text(&small_batch());
        text.push_str(&to_text(&small_batch()).lines().nth(1).unwrap()[..30]);
        match read_batch_from(Cursor::new(text)) {
            Err(LogIoError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tampered_log_prob_fails_verification() {
        let text = to_text(&small_batch());
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut r: Rollout = serde_json::from_str(&lines[1]).unwrap();
        r.log_prob_logging += 1e-3;
        lines[1] = serde_json::to_string(&r).unwrap();
        assert!(matches!(
            read_batch_from(Cursor::new(lines.join("\n"))),
            Err(LogIoError::Verification { line: 2, .. })
        ));
    }

    #[test]
    fn wrong_state_dimension_is_reported() {
        let text = to_text(&small_batch()).replacen("[0.1,3.141592653589793]", "[0.1]", 1);
        assert!(matches!(
            read_batch_from(Cursor::new(text)),
            Err(LogIoError::Dimension { line: 2, expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn missing_file_carries_path() {
        let err = read_batch("/definitely/not/here.jsonl").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.jsonl"));
    }
}
