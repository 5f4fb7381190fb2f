//! Post-processing of sweep outputs into comparison tables and plot-ready CSV.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::das::DasRecord;
use crate::error::{Error, Result};
use crate::harness::{sig6, AggregateRow, LabelRecord};
use crate::trajectory::TrajectoryRecord;

/// Policy label that marks full-training rows.
pub const FULL_TRAINING: &str = "full";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    pub policy: String,
    pub score_source: String,
    pub noise_kind: String,
    pub noise_rate: f64,
    pub prune_ratio: f64,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub full_mean_acc: f64,
    /// `mean_acc - full_mean_acc`.
    pub gap_vs_full: f64,
}

/// Mean gap over all noise conditions for one policy at one prune ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanDelta {
    pub policy: String,
    pub score_source: String,
    pub prune_ratio: f64,
    pub mean_gap: f64,
    pub conditions: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GapTable {
    pub cells: Vec<ComparisonCell>,
    pub mean_delta: Vec<MeanDelta>,
}

impl GapTable {
    pub fn mean_delta_for(&self, policy: &str, score_source: &str, prune_ratio: f64) -> Option<f64> {
        self.mean_delta
            .iter()
            .find(|m| m.policy == policy && m.score_source == score_source && m.prune_ratio == prune_ratio)
            .map(|m| m.mean_gap)
    }
}

fn noise_key(kind: &str, rate: f64) -> (String, u64) {
    (kind.to_owned(), rate.to_bits())
}

/// Gap of each policy cell against full training under the same noise.
/// Rows without an accuracy (all runs failed) are skipped.
pub fn build_gap_table(sweep: &[AggregateRow], full_training: &[AggregateRow]) -> Result<GapTable> {
    let full: HashMap<(String, u64), f64> = full_training
        .iter()
        .filter_map(|r| {
            r.test_acc_true_labels
                .map(|a| (noise_key(&r.key.noise_kind, r.key.noise_rate), a.mean))
        })
        .collect();
    let mut cells = Vec::new();
    for row in sweep.iter().filter(|r| r.key.policy != FULL_TRAINING) {
        let Some(acc) = row.test_acc_true_labels else { continue };
        let Some(&full_mean) = full.get(&noise_key(&row.key.noise_kind, row.key.noise_rate)) else {
            return Err(Error::InvalidInput(format!(
                "no full-training cell for noise {} at rate {} (needed by {}/{} at prune ratio {})",
                row.key.noise_kind, row.key.noise_rate, row.key.policy, row.key.score_source, row.key.target_prune_ratio
            )));
        };
        cells.push(ComparisonCell {
            policy: row.key.policy.clone(),
            score_source: row.key.score_source.clone(),
            noise_kind: row.key.noise_kind.clone(),
            noise_rate: row.key.noise_rate,
            prune_ratio: row.key.target_prune_ratio,
            mean_acc: acc.mean,
            std_acc: acc.std,
            full_mean_acc: full_mean,
            gap_vs_full: acc.mean - full_mean,
        });
    }
    let mut grouped: BTreeMap<(String, String, u64), (f64, usize)> = BTreeMap::new();
    for c in &cells {
        let e = grouped
            .entry((c.policy.clone(), c.score_source.clone(), c.prune_ratio.to_bits()))
            .or_insert((0.0, 0));
        e.0 += c.gap_vs_full;
        e.1 += 1;
    }
    let mean_delta = grouped
        .into_iter()
        .map(|((policy, score_source, ratio), (sum, count))| MeanDelta {
            policy,
            score_source,
            prune_ratio: f64::from_bits(ratio),
            mean_gap: sum / count as f64,
            conditions: count,
        })
        .collect();
    Ok(GapTable { cells, mean_delta })
}

pub fn write_gap_table_csv(path: &Path, table: &GapTable) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        policy: &'a str,
        score_source: &'a str,
        noise_kind: &'a str,
        noise_rate: Option<f64>,
        prune_ratio: f64,
        mean_acc: Option<f64>,
        std_acc: Option<f64>,
        gap_vs_full: f64,
    }
    let mut w = csv::Writer::from_path(path)?;
    for c in &table.cells {
        w.serialize(Row {
            policy: &c.policy,
            score_source: &c.score_source,
            noise_kind: &c.noise_kind,
            noise_rate: Some(c.noise_rate),
            prune_ratio: c.prune_ratio,
            mean_acc: Some(c.mean_acc),
            std_acc: Some(c.std_acc),
            gap_vs_full: sig6(c.gap_vs_full),
        })?;
    }
    for m in &table.mean_delta {
        w.serialize(Row {
            policy: &m.policy,
            score_source: &m.score_source,
            noise_kind: "mean_delta",
            noise_rate: None,
            prune_ratio: m.prune_ratio,
            mean_acc: None,
            std_acc: None,
            gap_vs_full: sig6(m.mean_gap),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleGroup {
    HardClean,
    Flipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardNoisyRow {
    pub epoch: usize,
    pub group: SampleGroup,
    pub count: usize,
    pub mean_loss: f64,
    pub mean_das: Option<f64>,
}

/// `(clean ids, flipped ids)`; together they cover every labelled sample once.
pub fn partition_clean_flipped(labels: &[LabelRecord]) -> (Vec<usize>, Vec<usize>) {
    let mut clean = Vec::new();
    let mut flipped = Vec::new();
    for l in labels {
        if l.is_flipped {
            flipped.push(l.id);
        } else {
            clean.push(l.id);
        }
    }
    (clean, flipped)
}

/// Clean samples in the top `top_percent`% by average dumped loss.
pub fn hard_clean_ids(trajectory: &[TrajectoryRecord], labels: &[LabelRecord], top_percent: f64) -> Result<Vec<usize>> {
    if !(top_percent > 0.0 && top_percent <= 100.0) {
        return Err(Error::Config(format!("top percent must be in (0, 100], got {top_percent}")));
    }
    let (clean, _) = partition_clean_flipped(labels);
    let mut sums: HashMap<usize, (f64, usize)> = HashMap::new();
    for r in trajectory {
        let e = sums.entry(r.id).or_insert((0.0, 0));
        e.0 += r.loss;
        e.1 += 1;
    }
    let mut scored: Vec<(usize, f64)> = clean
        .into_iter()
        .filter_map(|id| sums.get(&id).map(|(s, c)| (id, s / *c as f64)))
        .collect();
    if scored.is_empty() {
        return Err(Error::Empty("clean trajectories"));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let take = ((top_percent / 100.0 * scored.len() as f64).ceil() as usize).clamp(1, scored.len());
    let mut ids: Vec<usize> = scored[..take].iter().map(|(id, _)| *id).collect();
    ids.sort_unstable();
    Ok(ids)
}

/// Per-epoch mean loss and mean DAS for hard-clean and flipped samples.
pub fn hard_vs_noisy_export(
    trajectory: &[TrajectoryRecord],
    das: &[DasRecord],
    labels: &[LabelRecord],
    top_percent: f64,
) -> Result<Vec<HardNoisyRow>> {
    let (_, flipped) = partition_clean_flipped(labels);
    if flipped.is_empty() {
        return Err(Error::InvalidInput("no flipped samples; hard-vs-noisy needs a noisy run".into()));
    }
    if trajectory.is_empty() {
        return Err(Error::Empty("trajectory dump"));
    }
    let hard = hard_clean_ids(trajectory, labels, top_percent)?;
    let mut group_of: HashMap<usize, SampleGroup> = HashMap::new();
    for id in &hard {
        group_of.insert(*id, SampleGroup::HardClean);
    }
    for id in &flipped {
        group_of.insert(*id, SampleGroup::Flipped);
    }

    #[derive(Default)]
    struct Acc {
        loss: f64,
        loss_n: usize,
        das: f64,
        das_n: usize,
    }
    let mut acc: BTreeMap<(usize, u8), Acc> = BTreeMap::new();
    let slot = |g: SampleGroup| match g {
        SampleGroup::HardClean => 0u8,
        SampleGroup::Flipped => 1u8,
    };
    for r in trajectory {
        if let Some(&g) = group_of.get(&r.id) {
            let a = acc.entry((r.epoch, slot(g))).or_default();
            a.loss += r.loss;
            a.loss_n += 1;
        }
    }
    for r in das {
        if let Some(&g) = group_of.get(&r.id) {
            let a = acc.entry((r.epoch, slot(g))).or_default();
            a.das += r.das;
            a.das_n += 1;
        }
    }
    Ok(acc
        .into_iter()
        .filter(|(_, a)| a.loss_n > 0)
        .map(|((epoch, g), a)| HardNoisyRow {
            epoch,
            group: if g == 0 { SampleGroup::HardClean } else { SampleGroup::Flipped },
            count: a.loss_n,
            mean_loss: sig6(a.loss / a.loss_n as f64),
            mean_das: (a.das_n > 0).then(|| sig6(a.das / a.das_n as f64)),
        })
        .collect())
}

pub fn write_hard_vs_noisy_csv(path: &Path, rows: &[HardNoisyRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
