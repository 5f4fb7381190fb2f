//! Seed sweeps and mean ± std aggregation.
//!
//! Each run collapses to one [`RunSummary`]: terminal test accuracy,
//! terminal consumed passes and mean DAS, and the per-epoch mean of the
//! retained noise ratio and pruned fraction. Summaries are grouped by
//! `(policy, score_source, noise kind, noise rate, prune ratio)`; the
//! standard deviation is the sample one (n - 1), 0 for a single run.
//! Failed runs count toward `failed` and contribute no values.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::{read_jsonl, sig6, write_jsonl, RunLine};
use super::{run_seed, write_outcome, DumpOptions, RunStatus, METRICS_SUFFIX};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: String,
    pub seed: u64,
    pub policy: String,
    pub score_source: String,
    pub noise_kind: String,
    pub noise_rate: f64,
    pub target_prune_ratio: f64,
    pub failed: bool,
    pub epochs: usize,
    pub test_acc_true_labels: Option<f64>,
    pub retained_noise_ratio: Option<f64>,
    pub pruned_fraction: Option<f64>,
    pub mean_das: Option<f64>,
    pub consumed_forward_passes: Option<f64>,
}

impl RunSummary {
    pub fn key(&self) -> GroupKey {
        GroupKey {
            policy: self.policy.clone(),
            score_source: self.score_source.clone(),
            noise_kind: self.noise_kind.clone(),
            noise_rate: self.noise_rate,
            target_prune_ratio: self.target_prune_ratio,
        }
    }
}

/// Collapses one run's metrics lines. A run without a terminal line is failed.
pub fn summarize_run(lines: &[RunLine]) -> Result<RunSummary> {
    let records: Vec<_> = lines
        .iter()
        .filter_map(|l| match l {
            RunLine::Metrics(m) => Some(m),
            RunLine::Failure(_) => None,
        })
        .collect();
    let failure = lines.iter().find_map(|l| match l {
        RunLine::Failure(f) => Some(f),
        RunLine::Metrics(_) => None,
    });
    let first = records.first().copied();
    let (run, seed) = match (first, failure) {
        (Some(m), _) => (m.run.clone(), m.seed),
        (None, Some(f)) => (f.run.clone(), f.seed),
        (None, None) => return Err(Error::Empty("run metrics")),
    };
    let terminal = records.last().filter(|m| m.terminal).copied();
    let failed = failure.is_some() || terminal.is_none();
    let mean_of = |f: &dyn Fn(&super::MetricsRecord) -> f64| {
        (!failed && !records.is_empty()).then(|| records.iter().map(|m| f(m)).sum::<f64>() / records.len() as f64)
    };
    let summary = RunSummary {
        run,
        seed,
        policy: first.map(|m| m.policy.clone()).unwrap_or_default(),
        score_source: first.map(|m| m.score_source.clone()).unwrap_or_default(),
        noise_kind: first.map(|m| m.noise_kind.clone()).unwrap_or_default(),
        noise_rate: first.map_or(0.0, |m| m.noise_rate),
        target_prune_ratio: first.map_or(0.0, |m| m.target_prune_ratio),
        failed,
        epochs: records.len(),
        test_acc_true_labels: terminal.filter(|_| !failed).map(|m| m.test_acc_true_labels),
        retained_noise_ratio: mean_of(&|m| m.retained_noise_ratio).map(sig6),
        pruned_fraction: mean_of(&|m| m.pruned_fraction).map(sig6),
        mean_das: terminal.filter(|_| !failed).and_then(|m| m.mean_das),
        consumed_forward_passes: terminal.filter(|_| !failed).map(|m| m.consumed_forward_passes as f64),
    };
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupKey {
    pub policy: String,
    pub score_source: String,
    pub noise_kind: String,
    pub noise_rate: f64,
    pub target_prune_ratio: f64,
}

impl GroupKey {
    fn sort_key(&self) -> (String, String, String, u64, u64) {
        (
            self.policy.clone(),
            self.score_source.clone(),
            self.noise_kind.clone(),
            self.noise_rate.to_bits(),
            self.target_prune_ratio.to_bits(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MetricStats {
    /// `None` when there are no values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean: sig6(mean), std: sig6(std), n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    #[serde(flatten)]
    pub key: GroupKey,
    pub runs: usize,
    pub failed: usize,
    pub test_acc_true_labels: Option<MetricStats>,
    pub retained_noise_ratio: Option<MetricStats>,
    pub pruned_fraction: Option<MetricStats>,
    pub mean_das: Option<MetricStats>,
    pub consumed_forward_passes: Option<MetricStats>,
}

/// Flat CSV layout of an [`AggregateRow`].
#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    policy: &'a str,
    score_source: &'a str,
    noise_kind: &'a str,
    noise_rate: f64,
    target_prune_ratio: f64,
    runs: usize,
    failed: usize,
    test_acc_true_labels_mean: Option<f64>,
    test_acc_true_labels_std: Option<f64>,
    retained_noise_ratio_mean: Option<f64>,
    retained_noise_ratio_std: Option<f64>,
    pruned_fraction_mean: Option<f64>,
    pruned_fraction_std: Option<f64>,
    mean_das_mean: Option<f64>,
    mean_das_std: Option<f64>,
    consumed_forward_passes_mean: Option<f64>,
    consumed_forward_passes_std: Option<f64>,
}

pub fn aggregate(summaries: &[RunSummary]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<_, (GroupKey, Vec<&RunSummary>)> = BTreeMap::new();
    for s in summaries {
        let key = s.key();
        groups.entry(key.sort_key()).or_insert_with(|| (key, Vec::new())).1.push(s);
    }
    groups
        .into_values()
        .map(|(key, runs)| {
            let ok: Vec<&&RunSummary> = runs.iter().filter(|r| !r.failed).collect();
            let stats = |f: fn(&RunSummary) -> Option<f64>| {
                let values: Vec<f64> = ok.iter().filter_map(|r| f(r)).collect();
                MetricStats::of(&values)
            };
            AggregateRow {
                key,
                runs: runs.len(),
                failed: runs.len() - ok.len(),
                test_acc_true_labels: stats(|r| r.test_acc_true_labels),
                retained_noise_ratio: stats(|r| r.retained_noise_ratio),
                pruned_fraction: stats(|r| r.pruned_fraction),
                mean_das: stats(|r| r.mean_das),
                consumed_forward_passes: stats(|r| r.consumed_forward_passes),
            }
        })
        .collect()
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        let split = |s: &Option<MetricStats>| (s.map(|m| m.mean), s.map(|m| m.std));
        let (acc_m, acc_s) = split(&row.test_acc_true_labels);
        let (rn_m, rn_s) = split(&row.retained_noise_ratio);
        let (pf_m, pf_s) = split(&row.pruned_fraction);
        let (das_m, das_s) = split(&row.mean_das);
        let (c_m, c_s) = split(&row.consumed_forward_passes);
        w.serialize(CsvRow {
            policy: &row.key.policy,
            score_source: &row.key.score_source,
            noise_kind: &row.key.noise_kind,
            noise_rate: row.key.noise_rate,
            target_prune_ratio: row.key.target_prune_ratio,
            runs: row.runs,
            failed: row.failed,
            test_acc_true_labels_mean: acc_m,
            test_acc_true_labels_std: acc_s,
            retained_noise_ratio_mean: rn_m,
            retained_noise_ratio_std: rn_s,
            pruned_fraction_mean: pf_m,
            pruned_fraction_std: pf_s,
            mean_das_mean: das_m,
            mean_das_std: das_s,
            consumed_forward_passes_mean: c_m,
            consumed_forward_passes_std: c_s,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Summaries of every `*.metrics.jsonl` file in `dir`, sorted by file name.
pub fn summarize_dir(dir: &Path) -> Result<Vec<RunSummary>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(METRICS_SUFFIX)))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidInput(format!("no *{METRICS_SUFFIX} files in {}", dir.display())));
    }
    paths
        .par_iter()
        .map(|p| summarize_run(&read_jsonl::<RunLine>(p)?))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub summaries: Vec<RunSummary>,
    pub rows: Vec<AggregateRow>,
}

/// Runs every `(config, seed)` pair concurrently, writes per-run metrics
/// into `out_dir`, then `summary.csv` and `summary.jsonl`.
pub fn sweep(configs: &[RunConfig], out_dir: &Path, dumps: DumpOptions) -> Result<SweepReport> {
    if configs.is_empty() {
        return Err(Error::Config("sweep needs at least one run".into()));
    }
    let mut names = HashSet::new();
    for cfg in configs {
        if !names.insert(cfg.name.as_str()) {
            return Err(Error::Config(format!("duplicate run name {:?}", cfg.name)));
        }
    }
    std::fs::create_dir_all(out_dir)?;
    let jobs: Vec<(&RunConfig, u64)> = configs
        .iter()
        .flat_map(|c| c.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let summaries = jobs
        .par_iter()
        .map(|&(cfg, seed)| -> Result<RunSummary> {
            let lines = match run_seed(cfg, seed, dumps) {
                Ok(outcome) => {
                    write_outcome(out_dir, cfg, &outcome)?;
                    outcome.lines(&cfg.name)
                }
                Err(e) => {
                    let outcome = super::SeedOutcome {
                        seed,
                        records: Vec::new(),
                        status: RunStatus::Failed { epoch: 0, error: e.to_string() },
                        plans_checked: 0,
                        trajectory_dump: Vec::new(),
                        das_dump: Vec::new(),
                        train_labels: Vec::new(),
                    };
                    write_outcome(out_dir, cfg, &outcome)?;
                    outcome.lines(&cfg.name)
                }
            };
            let mut summary = summarize_run(&lines)?;
            if summary.policy.is_empty() {
                // Setup failures have no metrics lines to copy the keys from.
                summary.policy = cfg.policy.policy.label().to_owned();
                summary.score_source = cfg.policy.score_source.as_str().to_owned();
                summary.noise_kind = cfg.noise.kind.as_str().to_owned();
                summary.noise_rate = sig6(cfg.noise.rate);
                summary.target_prune_ratio = sig6(cfg.target_prune_ratio);
            }
            Ok(summary)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = aggregate(&summaries);
    write_aggregate_csv(&out_dir.join("summary.csv"), &rows)?;
    write_jsonl(&out_dir.join("summary.jsonl"), &rows)?;
    Ok(SweepReport { summaries, rows })
}
