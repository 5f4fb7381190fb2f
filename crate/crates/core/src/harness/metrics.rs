//! Per-epoch metrics lines and their JSONL encoding.
//!
//! Real numbers are rounded to 6 significant digits before they are stored,
//! so the in-memory record and its serialized form agree exactly.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rounds to 6 significant digits.
pub fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsRecord {
    pub run: String,
    pub seed: u64,
    pub epoch: usize,
    pub policy: String,
    pub score_source: String,
    /// Score actually used to build this epoch's plan: `full`, `random`,
    /// `epoch_loss` or `das` (differs from `score_source` during warm-up).
    pub plan_basis: String,
    pub noise_kind: String,
    pub noise_rate: f64,
    pub target_prune_ratio: f64,
    pub test_acc_true_labels: f64,
    pub retained_noise_ratio: f64,
    pub pruned_fraction: f64,
    pub mean_das: Option<f64>,
    pub reference_loss: f64,
    pub consumed_forward_passes: u64,
    pub full_pass_budget: u64,
    pub terminal: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<u64>,
}

impl MetricsRecord {
    pub fn check_fractions(&self) -> Result<()> {
        for (name, v) in [
            ("test_acc_true_labels", self.test_acc_true_labels),
            ("retained_noise_ratio", self.retained_noise_ratio),
            ("pruned_fraction", self.pruned_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invariant(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureRecord {
    pub run: String,
    pub seed: u64,
    pub status: String,
    pub epoch: usize,
    pub error: String,
}

/// One line of a run's metrics file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RunLine {
    Metrics(MetricsRecord),
    Failure(FailureRecord),
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.123456789), 0.123457);
        assert_eq!(sig6(1234567.0), 1234570.0);
        assert_eq!(sig6(-2.0000004), -2.0);
        assert_eq!(serde_json::to_string(&sig6(1.0 / 3.0)).unwrap(), "0.333333");
    }

    #[test]
    fn lines_round_trip() {
        let lines = vec![RunLine::Failure(FailureRecord {
            run: "x".into(),
            seed: 1,
            status: "failed".into(),
            epoch: 3,
            error: "diverged".into(),
        })];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.jsonl");
        write_jsonl(&path, &lines).unwrap();
        let back: Vec<RunLine> = read_jsonl(&path).unwrap();
        assert_eq!(back, lines);
    }
}
