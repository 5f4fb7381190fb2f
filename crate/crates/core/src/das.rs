//! Dynamic Alignment Score: correlation between each sample's loss window
//! and the reference loss window.
//!
//! Degenerate inputs (length < 2, zero variance, zero norm) score exactly
//! 0.0, which neither promotes nor demotes a sample under a mean threshold.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{ReferenceTrajectory, TrajectoryBank};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    #[default]
    Pearson,
    Cosine,
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Empty("correlation input"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation with two-pass centering.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    if a.len() < 2 {
        return Ok(0.0);
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    Ok(finish(sab, saa, sbb))
}

fn finish(dot: f64, saa: f64, sbb: f64) -> f64 {
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    let r = dot / (saa.sqrt() * sbb.sqrt());
    if r.is_nan() {
        0.0
    } else {
        r.clamp(-1.0, 1.0)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    Ok(finish(sab, saa, sbb))
}

pub fn correlate(kind: CorrelationKind, a: &[f64], b: &[f64]) -> Result<f64> {
    match kind {
        CorrelationKind::Pearson => pearson(a, b),
        CorrelationKind::Cosine => cosine(a, b),
    }
}

/// Average ranks (1-based), ties sharing the mean of their positions.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            out[i] = rank;
        }
        start = end;
    }
    out
}

/// Spearman rank correlation (Pearson on average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    pearson(&ranks(a), &ranks(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DasScores {
    pub epoch: usize,
    pub scores: Vec<f64>,
    pub correlation_kind: CorrelationKind,
}

impl DasScores {
    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        mean(&self.scores)
    }
}

/// One line of the optional DAS dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DasRecord {
    pub epoch: usize,
    pub id: usize,
    pub das: f64,
}

/// Scores every sample in `bank` against `reference`.
///
/// The reference window is centered (or normed) once; each sample then
/// costs one O(N) pass over its window.
pub fn compute_das_all(bank: &TrajectoryBank, reference: &ReferenceTrajectory, kind: CorrelationKind) -> Result<DasScores> {
    let ref_window = reference.read();
    if ref_window.is_empty() || bank.fill_count() == 0 {
        return Err(Error::Empty("trajectory window"));
    }
    if bank.fill_count() != ref_window.len() {
        return Err(Error::Invariant(format!(
            "trajectory length {} does not match reference length {}",
            bank.fill_count(),
            ref_window.len()
        )));
    }
    let len = ref_window.len();
    let centered_ref: Vec<f64> = match kind {
        CorrelationKind::Pearson => {
            let m = mean(&ref_window);
            ref_window.iter().map(|v| v - m).collect()
        }
        CorrelationKind::Cosine => ref_window,
    };
    let ref_ss: f64 = centered_ref.iter().map(|v| v * v).sum();
    let degenerate = ref_ss == 0.0 || (kind == CorrelationKind::Pearson && len < 2);

    let scores = (0..bank.num_samples())
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(len),
            |buf, id| -> Result<f64> {
                if degenerate {
                    return Ok(0.0);
                }
                bank.read_window_into(id, buf)?;
                let shift = match kind {
                    CorrelationKind::Pearson => mean(buf),
                    CorrelationKind::Cosine => 0.0,
                };
                let (mut dot, mut ss) = (0.0, 0.0);
                for (x, r) in buf.iter().zip(&centered_ref) {
                    let dx = x - shift;
                    dot += dx * r;
                    ss += dx * dx;
                }
                Ok(finish(dot, ss, ref_ss))
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    Ok(DasScores {
        epoch: bank.epochs_recorded(),
        scores,
        correlation_kind: kind,
    })
}
