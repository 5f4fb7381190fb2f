//! Experiment orchestration: dataset synthesis, noise, reference carving,
//! and the per-epoch train / record / score / prune loop.
//!
//! Loop order for epoch `t` (1-based):
//!
//! 1. train one epoch on plan `t` with its weights,
//! 2. record the epoch's per-sample losses (pruned samples carried forward),
//! 3. record the mean reference loss on the end-of-epoch model,
//! 4. score samples from the updated windows,
//! 5. build plan `t + 1`,
//! 6. emit the metrics line for epoch `t`.
//!
//! The run stops after the epoch that exhausts the forward-pass budget or
//! after epoch `T`, whichever comes first.

mod budget;
mod config;
mod metrics;
mod sweep;

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

pub use budget::Budget;
pub use config::{DasConfig, DatasetSpec, ReferenceSpec, RunConfig, SweepConfig};
pub use metrics::{read_jsonl, sig6, write_jsonl, FailureRecord, MetricsRecord, RunLine};
pub use sweep::{
    aggregate, summarize_dir, summarize_run, sweep, write_aggregate_csv, AggregateRow, GroupKey, MetricStats, RunSummary,
    SweepReport,
};

use crate::das::{compute_das_all, DasRecord, DasScores};
use crate::data::{load_csv, Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::noise::inject_uniform_symmetric;
use crate::policy::{
    dynamic_random_plan, in_annealing_tail, infobatch_plan, plan_from_subset, seta_plan, static_random_select,
    EpochPlan, PolicyKind, ScoreSource, ScoreVector,
};
use crate::rng::{derive_seed, epoch_rng, stream_rng, Stream};
use crate::trainer::{evaluate_accuracy, train_epoch, LabelSource, Model, TrainerConfig};
use crate::trajectory::{ReferenceTrajectory, TrajFill, TrajectoryBank, TrajectoryRecord};

/// `|kept ∩ flipped| / |kept|`.
pub fn retained_noise_ratio(plan: &EpochPlan, dataset: &Dataset) -> Result<f64> {
    if plan.kept.is_empty() {
        return Err(Error::Empty("kept set"));
    }
    let mut flipped = 0usize;
    for &id in &plan.kept {
        flipped += usize::from(dataset.get(id)?.is_flipped());
    }
    Ok(flipped as f64 / plan.kept.len() as f64)
}

/// Settings needed to train the probe model for pseudo-clean references.
#[derive(Debug, Clone, Copy)]
pub struct ProbeSettings<'a> {
    pub model: crate::trainer::Architecture,
    pub trainer: &'a TrainerConfig,
    pub seed: u64,
}

/// Splits a (noisy) pool into `(train, reference)`; both keep their origin ids.
pub fn carve_reference(pool: &Dataset, spec: &ReferenceSpec, probe: ProbeSettings<'_>) -> Result<(Dataset, Dataset)> {
    let n = pool.len();
    let count = (spec.fraction() * n as f64).round() as usize;
    if count == 0 {
        return Err(Error::Empty("reference set"));
    }
    if count >= n {
        return Err(Error::Config(format!("reference fraction {} leaves no training data", spec.fraction())));
    }
    let mut rng = stream_rng(probe.seed, Stream::Reference);
    let ref_ids: Vec<usize> = match *spec {
        ReferenceSpec::PseudoSmallLoss { probe_epochs, .. } => {
            let mut init_rng = stream_rng(probe.seed, Stream::Probe);
            let mut model = Model::init(probe.model, pool.dim(), pool.num_classes(), &mut init_rng)?;
            let all: Vec<usize> = (0..n).collect();
            let ones = vec![1.0; n];
            for epoch in 1..=probe_epochs {
                let mut shuffle = epoch_rng(probe.seed, Stream::Probe, epoch);
                train_epoch(&mut model, pool, &all, &ones, probe.trainer, epoch, &mut shuffle)?;
            }
            let losses = model.dataset_losses(pool)?;
            let mut order = all;
            order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
            order.truncate(count);
            order
        }
        _ => {
            let mut ids: Vec<usize> = (0..n).collect();
            let (chosen, _) = ids.partial_shuffle(&mut rng, count);
            chosen.to_vec()
        }
    };
    let mut ref_ids = ref_ids;
    ref_ids.sort_unstable();
    let in_ref: HashSet<usize> = ref_ids.iter().copied().collect();
    let train_ids: Vec<usize> = (0..n).filter(|i| !in_ref.contains(i)).collect();

    let train = pool.subset(&train_ids, SplitTag::Train)?;
    let mut reference = pool.subset(&ref_ids, SplitTag::Reference)?;
    match *spec {
        ReferenceSpec::HeldOutClean { .. } => {
            for s in reference.samples_mut() {
                s.restore_true_label();
            }
        }
        ReferenceSpec::ReferenceNoise { rate, .. } => {
            for s in reference.samples_mut() {
                s.restore_true_label();
            }
            reference = inject_uniform_symmetric(&reference, rate, &mut rng)?;
        }
        ReferenceSpec::PseudoSmallLoss { .. } | ReferenceSpec::NoisyRandom { .. } => {}
    }
    Ok((train, reference))
}

/// Materialises `(pool, test)` for a dataset spec.
pub fn load_dataset(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    match spec {
        DatasetSpec::Blobs(blobs) => blobs.generate(),
        DatasetSpec::Csv { path, num_classes, test_fraction, seed } => {
            let all = load_csv(path, *num_classes)?;
            let n = all.len();
            let n_test = (test_fraction * n as f64).round() as usize;
            if n_test == 0 || n_test >= n {
                return Err(Error::Config("csv test split would be empty or cover everything".into()));
            }
            let mut ids: Vec<usize> = (0..n).collect();
            ids.shuffle(&mut stream_rng(*seed, Stream::Data));
            let (test_ids, pool_ids) = ids.split_at(n_test);
            let mut test_ids = test_ids.to_vec();
            let mut pool_ids = pool_ids.to_vec();
            test_ids.sort_unstable();
            pool_ids.sort_unstable();
            Ok((all.subset(&pool_ids, SplitTag::Train)?, all.subset(&test_ids, SplitTag::Test)?))
        }
    }
}

/// What one epoch produced.
#[derive(Debug, Clone)]
pub struct EpochReport {
    pub record: MetricsRecord,
    /// The plan trained this epoch.
    pub plan: EpochPlan,
    pub das: Option<DasScores>,
}

/// One seed of one configuration, advanced an epoch at a time.
#[derive(Debug, Clone)]
pub struct Experiment {
    config: RunConfig,
    seed: u64,
    policy_seed: u64,
    train: Dataset,
    reference: Dataset,
    test: Dataset,
    reference_origins: HashSet<usize>,
    model: Model,
    bank: TrajectoryBank,
    reference_traj: ReferenceTrajectory,
    next_plan: EpochPlan,
    next_basis: &'static str,
    static_subset: Option<Vec<usize>>,
    budget: Budget,
    epoch: usize,
    finished: bool,
    plans_checked: usize,
}

impl Experiment {
    pub fn new(config: RunConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (pool, test) = load_dataset(&config.dataset)?;
        config.noise.validate(pool.num_classes())?;
        let noisy = config.noise.apply(&pool, &mut stream_rng(seed, Stream::Noise))?;
        let (train, reference) = carve_reference(
            &noisy,
            &config.reference,
            ProbeSettings {
                model: config.model,
                trainer: &config.trainer,
                seed,
            },
        )?;
        if !train.is_disjoint_from(&reference) {
            return Err(Error::Invariant("reference overlaps training set".into()));
        }
        let model = Model::init(config.model, train.dim(), train.num_classes(), &mut stream_rng(seed, Stream::Init))?;
        let n = train.len();
        let bank = TrajectoryBank::new(n, config.das.window)?;
        let reference_traj = ReferenceTrajectory::new(config.das.window)?;
        let budget = Budget::new(config.target_prune_ratio, n, config.trainer.total_epochs);
        let policy_seed = derive_seed(seed, Stream::Policy, config.policy.seed);

        let keep_fraction = config.policy.keep_fraction();
        let (next_plan, next_basis, static_subset) = match config.policy.policy {
            PolicyKind::StaticRandom => {
                let subset = static_random_select(n, keep_fraction, &mut stream_rng(policy_seed, Stream::Policy))?;
                (plan_from_subset(n, subset.clone(), 1), "random", Some(subset))
            }
            PolicyKind::DynamicRandom => {
                let plan = dynamic_random_plan(n, keep_fraction, 1, &mut epoch_rng(policy_seed, Stream::Policy, 1))?;
                (plan, "random", None)
            }
            _ => (EpochPlan::full(n, 1), "full", None),
        };
        let reference_origins = reference.origin().iter().copied().collect();
        Ok(Self {
            config,
            seed,
            policy_seed,
            train,
            reference,
            test,
            reference_origins,
            model,
            bank,
            reference_traj,
            next_plan,
            next_basis,
            static_subset,
            budget,
            epoch: 0,
            finished: false,
            plans_checked: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn train_set(&self) -> &Dataset {
        &self.train
    }

    pub fn reference_set(&self) -> &Dataset {
        &self.reference
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn bank(&self) -> &TrajectoryBank {
        &self.bank
    }

    pub fn reference_trajectory(&self) -> &ReferenceTrajectory {
        &self.reference_traj
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// The plan the next `step` will train on.
    pub fn next_plan(&self) -> &EpochPlan {
        &self.next_plan
    }

    /// Number of plans that passed the in-run audit.
    pub fn plans_checked(&self) -> usize {
        self.plans_checked
    }

    fn das_valid(&self) -> bool {
        self.bank.fill_count() >= self.config.das.min_window
    }

    /// Runs one epoch.
    pub fn step(&mut self) -> Result<EpochReport> {
        if self.finished {
            return Err(Error::InvalidInput("experiment already finished".into()));
        }
        let started = Instant::now();
        let epoch = self.epoch + 1;
        let total_epochs = self.config.trainer.total_epochs;
        let plan = std::mem::replace(&mut self.next_plan, EpochPlan::full(0, 0));
        let basis = self.next_basis;
        self.audit_plan(&plan, epoch)?;

        let mut shuffle = epoch_rng(self.seed, Stream::Shuffle, epoch);
        let mut observed = train_epoch(
            &mut self.model,
            &self.train,
            &plan.kept,
            &plan.weights,
            &self.config.trainer,
            epoch,
            &mut shuffle,
        )?;
        self.budget.consume(plan.kept.len());

        // Samples without a fresh loss: re-evaluated when configured, and
        // always when there is no earlier loss to carry.
        let trained: HashSet<usize> = plan.kept.iter().copied().collect();
        let reevaluate = self.config.das.traj_fill == TrajFill::Reevaluate;
        for id in 0..self.train.len() {
            if !trained.contains(&id) && (reevaluate || epoch == 1) {
                observed.push((id, self.model.per_sample_loss(self.train.get(id)?)?));
            }
        }
        self.bank.record_epoch_losses(epoch, &observed)?;
        let reference_loss = self.reference_traj.record_reference_loss(epoch, &self.model, &self.reference)?;

        let das = if self.das_valid() {
            Some(compute_das_all(&self.bank, &self.reference_traj, self.config.das.correlation)?)
        } else {
            None
        };

        self.epoch = epoch;
        self.finished = self.budget.exhausted() || epoch >= total_epochs;
        if !self.finished {
            let (next, next_basis) = self.build_plan(epoch + 1, das.as_ref())?;
            self.next_plan = next.with_trajectory_epoch(self.bank.epochs_recorded());
            self.next_basis = next_basis;
        } else if self.budget.exhausted() && !self.budget.within_one_epoch() {
            return Err(Error::Invariant(format!(
                "consumed {} overshoots budget {} by more than one epoch",
                self.budget.consumed, self.budget.full_pass_budget
            )));
        }

        let test_acc = evaluate_accuracy(&self.model, &self.test, LabelSource::True)?;
        let record = MetricsRecord {
            run: self.config.name.clone(),
            seed: self.seed,
            epoch,
            policy: self.config.policy.policy.label().to_owned(),
            score_source: self.config.policy.score_source.as_str().to_owned(),
            plan_basis: basis.to_owned(),
            noise_kind: self.config.noise.kind.as_str().to_owned(),
            noise_rate: sig6(self.config.noise.rate),
            target_prune_ratio: sig6(self.config.target_prune_ratio),
            test_acc_true_labels: sig6(test_acc),
            retained_noise_ratio: sig6(retained_noise_ratio(&plan, &self.train)?),
            pruned_fraction: sig6(plan.pruned_fraction()),
            mean_das: das.as_ref().map(|d| sig6(d.mean())),
            reference_loss: sig6(reference_loss),
            consumed_forward_passes: self.budget.consumed,
            full_pass_budget: self.budget.full_pass_budget,
            terminal: self.finished,
            wall_ms: self
                .config
                .record_wall_time
                .then(|| started.elapsed().as_millis() as u64),
        };
        record.check_fractions()?;
        Ok(EpochReport { record, plan, das })
    }

    fn build_plan(&self, epoch: usize, das: Option<&DasScores>) -> Result<(EpochPlan, &'static str)> {
        let cfg = &self.config.policy;
        let n = self.train.len();
        let total = self.config.trainer.total_epochs;
        let mut rng = epoch_rng(self.policy_seed, Stream::Policy, epoch);
        match cfg.policy {
            PolicyKind::Full => Ok((EpochPlan::full(n, epoch), "full")),
            PolicyKind::StaticRandom => {
                let subset = self.static_subset.clone().expect("static subset chosen at construction");
                Ok((plan_from_subset(n, subset, epoch), "random"))
            }
            PolicyKind::DynamicRandom => Ok((dynamic_random_plan(n, cfg.keep_fraction(), epoch, &mut rng)?, "random")),
            PolicyKind::Infobatch | PolicyKind::Seta => {
                // Alignment scores replace the loss only once windows are long enough.
                let scores = match (cfg.score_source, das) {
                    (ScoreSource::Das, Some(d)) => ScoreVector::new(d.scores.clone(), ScoreSource::Das)?,
                    _ => ScoreVector::new(self.bank.latest()?, ScoreSource::EpochLoss)?,
                };
                let basis = scores.source.as_str();
                let plan = if cfg.policy == PolicyKind::Infobatch {
                    infobatch_plan(&scores, cfg, epoch, total, &mut rng)?
                } else {
                    seta_plan(&scores, cfg, epoch, total, &mut rng)?
                };
                Ok((plan, basis))
            }
        }
    }

    /// In-run checks on every plan before it is trained.
    fn audit_plan(&mut self, plan: &EpochPlan, epoch: usize) -> Result<()> {
        let cfg = &self.config.policy;
        if plan.epoch != epoch || plan.num_samples != self.train.len() {
            return Err(Error::Invariant(format!("plan for epoch {} used at epoch {epoch}", plan.epoch)));
        }
        plan.check(cfg.candidate_weight())?;
        if epoch > 1 && cfg.policy.uses_scores() && plan.trajectory_epoch != epoch - 1 {
            return Err(Error::Invariant(format!(
                "plan for epoch {epoch} scored from trajectories at epoch {}",
                plan.trajectory_epoch
            )));
        }
        if cfg.policy.anneals() && in_annealing_tail(epoch, cfg.delta, self.config.trainer.total_epochs) && !plan.is_full_keep() {
            return Err(Error::Invariant(format!("plan for annealing epoch {epoch} prunes samples")));
        }
        for &id in &plan.kept {
            if self.reference_origins.contains(&self.train.origin_of(id)?) {
                return Err(Error::Invariant(format!("reference sample in plan at epoch {epoch}")));
            }
        }
        if plan.kept.is_empty() {
            return Err(Error::Empty("epoch plan"));
        }
        self.plans_checked += 1;
        Ok(())
    }
}

/// Dumps requested alongside the metrics file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DumpOptions {
    pub trajectories: bool,
    pub das: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Failed { epoch: usize, error: String },
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub status: RunStatus,
    pub plans_checked: usize,
    pub trajectory_dump: Vec<TrajectoryRecord>,
    pub das_dump: Vec<DasRecord>,
    /// `(id, noisy_label, true_label, is_flipped)` for the training split.
    pub train_labels: Vec<LabelRecord>,
}

impl SeedOutcome {
    pub fn lines(&self, run: &str) -> Vec<RunLine> {
        let mut lines: Vec<RunLine> = self.records.iter().cloned().map(RunLine::Metrics).collect();
        if let RunStatus::Failed { epoch, error } = &self.status {
            lines.push(RunLine::Failure(FailureRecord {
                run: run.to_owned(),
                seed: self.seed,
                status: "failed".into(),
                epoch: *epoch,
                error: error.clone(),
            }));
        }
        lines
    }

    pub fn terminal(&self) -> Option<&MetricsRecord> {
        self.records.last().filter(|r| r.terminal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LabelRecord {
    pub id: usize,
    pub noisy_label: usize,
    pub true_label: usize,
    pub is_flipped: bool,
}

/// Runs one seed to completion. Setup errors are returned; errors during
/// training (e.g. divergence) are captured in the outcome's status.
pub fn run_seed(config: &RunConfig, seed: u64, dumps: DumpOptions) -> Result<SeedOutcome> {
    let mut exp = Experiment::new(config.clone(), seed)?;
    let train_labels = exp
        .train_set()
        .samples()
        .iter()
        .map(|s| LabelRecord {
            id: s.id(),
            noisy_label: s.noisy_label(),
            true_label: s.true_label(),
            is_flipped: s.is_flipped(),
        })
        .collect();
    let mut outcome = SeedOutcome {
        seed,
        records: Vec::new(),
        status: RunStatus::Completed,
        plans_checked: 0,
        trajectory_dump: Vec::new(),
        das_dump: Vec::new(),
        train_labels,
    };
    while !exp.is_finished() {
        match exp.step() {
            Ok(report) => {
                if dumps.trajectories {
                    outcome.trajectory_dump.extend(exp.bank().latest_records());
                }
                if let (true, Some(das)) = (dumps.das, &report.das) {
                    outcome.das_dump.extend(das.scores.iter().enumerate().map(|(id, v)| DasRecord {
                        epoch: das.epoch,
                        id,
                        das: *v,
                    }));
                }
                outcome.records.push(report.record);
            }
            Err(e) => {
                outcome.status = RunStatus::Failed {
                    epoch: exp.epoch() + 1,
                    error: e.to_string(),
                };
                break;
            }
        }
    }
    outcome.plans_checked = exp.plans_checked();
    Ok(outcome)
}

/// All seeds of one configuration, in seed order.
pub fn run_experiment(config: &RunConfig, dumps: DumpOptions) -> Result<Vec<SeedOutcome>> {
    config.validate()?;
    use rayon::prelude::*;
    config.seeds.par_iter().map(|&seed| run_seed(config, seed, dumps)).collect()
}

/// Paths written for one seed.
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub metrics: PathBuf,
    pub trajectories: Option<PathBuf>,
    pub das: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

pub const METRICS_SUFFIX: &str = ".metrics.jsonl";

pub fn metrics_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}{METRICS_SUFFIX}"))
}

/// Writes a seed's metrics file and any dumps into `dir`.
pub fn write_outcome(dir: &Path, config: &RunConfig, outcome: &SeedOutcome) -> Result<RunFiles> {
    std::fs::create_dir_all(dir)?;
    let stem = config.run_stem(outcome.seed);
    let metrics = metrics_path(dir, &stem);
    write_jsonl(&metrics, &outcome.lines(&config.name))?;
    let mut files = RunFiles {
        metrics,
        trajectories: None,
        das: None,
        labels: None,
    };
    if !outcome.trajectory_dump.is_empty() {
        let p = dir.join(format!("{stem}.traj.jsonl"));
        write_jsonl(&p, &outcome.trajectory_dump)?;
        files.trajectories = Some(p);
    }
    if !outcome.das_dump.is_empty() {
        let p = dir.join(format!("{stem}.das.jsonl"));
        write_jsonl(&p, &outcome.das_dump)?;
        files.das = Some(p);
    }
    if files.trajectories.is_some() || files.das.is_some() {
        let p = dir.join(format!("{stem}.labels.jsonl"));
        write_jsonl(&p, &outcome.train_labels)?;
        files.labels = Some(p);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BlobsSpec;
    use crate::noise::{NoiseKind, NoiseSpec};
    use crate::policy::PolicyConfig;
    use crate::trainer::{Architecture, LrSchedule};

    pub(crate) fn small_config(policy: PolicyConfig) -> RunConfig {
        RunConfig {
            name: "t".into(),
            dataset: DatasetSpec::Blobs(BlobsSpec {
                n: 300,
                n_test: 100,
                d: 6,
                classes: 4,
                cluster_std: 1.0,
                center_scale: 1.0,
                seed: 3,
            }),
            noise: NoiseSpec::new(NoiseKind::UniformSymmetric, 0.3),
            reference: ReferenceSpec::HeldOutClean { fraction: 0.1 },
            model: Architecture::Linear,
            trainer: TrainerConfig {
                batch_size: 32,
                lr: 0.2,
                total_epochs: 12,
                lr_schedule: LrSchedule::Constant,
            },
            policy,
            das: DasConfig {
                window: 4,
                ..DasConfig::default()
            },
            target_prune_ratio: 0.0,
            seeds: vec![0],
            output_dir: None,
            record_wall_time: false,
        }
    }

    #[test]
    fn retained_ratio_edges() {
        let clean = Dataset::new(
            (0..4).map(|i| crate::data::Sample::clean(i, vec![0.0], i % 2)).collect(),
            2,
            SplitTag::Train,
        )
        .unwrap();
        assert_eq!(retained_noise_ratio(&EpochPlan::full(4, 1), &clean).unwrap(), 0.0);
        let noisy = Dataset::new(
            (0..4)
                .map(|i| crate::data::Sample::with_labels(i, vec![0.0], if i < 2 { 1 } else { 0 }, 0))
                .collect(),
            2,
            SplitTag::Train,
        )
        .unwrap();
        let flipped_only = plan_from_subset(4, vec![0, 1], 1);
        assert_eq!(retained_noise_ratio(&flipped_only, &noisy).unwrap(), 1.0);
        assert!(retained_noise_ratio(&plan_from_subset(4, vec![], 1), &noisy).is_err());
    }

    #[test]
    fn carve_held_out_clean() {
        let (pool, _) = BlobsSpec { n: 1000, n_test: 10, d: 2, classes: 5, ..Default::default() }
            .generate()
            .unwrap();
        let noisy = NoiseSpec::new(NoiseKind::UniformSymmetric, 0.4)
            .apply(&pool, &mut stream_rng(1, Stream::Noise))
            .unwrap();
        let trainer = TrainerConfig { batch_size: 32, lr: 0.1, total_epochs: 1, lr_schedule: LrSchedule::Constant };
        let probe = ProbeSettings { model: Architecture::Linear, trainer: &trainer, seed: 1 };
        let (train, reference) = carve_reference(&noisy, &ReferenceSpec::HeldOutClean { fraction: 0.1 }, probe).unwrap();
        assert_eq!(reference.len(), 100);
        assert_eq!(train.len(), 900);
        assert!(train.is_disjoint_from(&reference));
        assert!(reference.is_clean());
        let (_, noisy_ref) = carve_reference(&noisy, &ReferenceSpec::NoisyRandom { fraction: 0.1 }, probe).unwrap();
        assert!(!noisy_ref.is_clean());
        let (_, re_noised) =
            carve_reference(&noisy, &ReferenceSpec::ReferenceNoise { fraction: 0.1, rate: 0.2 }, probe).unwrap();
        assert_eq!(re_noised.flipped_count(), 20);
        assert!(carve_reference(&noisy, &ReferenceSpec::HeldOutClean { fraction: 0.9999 }, probe).is_err());
        assert!(carve_reference(&noisy, &ReferenceSpec::HeldOutClean { fraction: 0.0001 }, probe).is_err());
    }

    #[test]
    fn static_random_one_epoch_accounting() {
        let mut policy = PolicyConfig::new(PolicyKind::StaticRandom, ScoreSource::EpochLoss, 0.0);
        policy.keep_fraction = Some(1.0);
        let mut cfg = small_config(policy);
        cfg.dataset = DatasetSpec::Blobs(BlobsSpec { n: 12, n_test: 4, d: 2, classes: 2, ..Default::default() });
        cfg.reference = ReferenceSpec::HeldOutClean { fraction: 1.0 / 6.0 };
        cfg.trainer.total_epochs = 1;
        let out = run_seed(&cfg, 0, DumpOptions::default()).unwrap();
        assert_eq!(out.status, RunStatus::Completed);
        let last = out.terminal().unwrap();
        assert_eq!(last.consumed_forward_passes, 10);
    }

    #[test]
    fn static_subset_is_reused() {
        let policy = PolicyConfig::new(PolicyKind::StaticRandom, ScoreSource::EpochLoss, 0.4);
        let mut exp = Experiment::new(small_config(policy), 5).unwrap();
        let first = exp.step().unwrap().plan.kept;
        let mut last = first.clone();
        while !exp.is_finished() {
            last = exp.step().unwrap().plan.kept;
        }
        assert_eq!(first, last);
        assert_eq!(exp.epoch(), 12);
    }

    #[test]
    fn loop_order_and_warmup() {
        let policy = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::Das, 0.5);
        let mut exp = Experiment::new(small_config(policy), 1).unwrap();
        let r1 = exp.step().unwrap();
        assert_eq!(r1.record.plan_basis, "full");
        assert!(r1.das.is_none());
        // After epoch 1 windows have length 1 < min_window, so plan 2 uses losses.
        assert_eq!(exp.next_plan().trajectory_epoch, 1);
        let r2 = exp.step().unwrap();
        assert_eq!(r2.record.plan_basis, "epoch_loss");
        assert!(r2.das.is_some());
        let r3 = exp.step().unwrap();
        assert_eq!(r3.record.plan_basis, "das");
        assert_eq!(r3.plan.trajectory_epoch, 2);
    }

    #[test]
    fn budget_stops_run() {
        let mut policy = PolicyConfig::new(PolicyKind::DynamicRandom, ScoreSource::EpochLoss, 0.5);
        policy.keep_fraction = Some(0.5);
        let mut cfg = small_config(policy);
        cfg.target_prune_ratio = 0.75;
        let out = run_seed(&cfg, 0, DumpOptions::default()).unwrap();
        let last = out.terminal().unwrap();
        // 270 train samples, 12 epochs: budget ceil(0.25 * 270 * 12) = 810,
        // 135 per epoch -> 6 epochs.
        assert_eq!(last.full_pass_budget, 810);
        assert_eq!(last.epoch, 6);
        assert_eq!(last.consumed_forward_passes, 810);
    }

    #[test]
    fn divergence_marks_run_failed() {
        let policy = PolicyConfig::new(PolicyKind::Full, ScoreSource::EpochLoss, 0.0);
        let mut cfg = small_config(policy);
        cfg.trainer.lr = 1e9;
        cfg.dataset = DatasetSpec::Blobs(BlobsSpec {
            n: 300,
            n_test: 10,
            d: 6,
            classes: 4,
            cluster_std: 1.0,
            center_scale: 100.0,
            seed: 3,
        });
        let out = run_seed(&cfg, 0, DumpOptions::default()).unwrap();
        assert!(matches!(out.status, RunStatus::Failed { .. }), "{:?}", out.status);
        assert!(out.terminal().is_none());
        let lines = out.lines("t");
        assert!(matches!(lines.last(), Some(RunLine::Failure(_))));
    }

    #[test]
    fn reevaluate_fill_has_no_carried_entries() {
        let mut policy = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::EpochLoss, 0.5);
        policy.delta = 1.0;
        let mut cfg = small_config(policy);
        cfg.das.traj_fill = TrajFill::Reevaluate;
        let out = run_seed(&cfg, 0, DumpOptions { trajectories: true, das: true }).unwrap();
        assert!(out.trajectory_dump.iter().all(|r| !r.carried));
        assert!(!out.das_dump.is_empty());
        cfg.das.traj_fill = TrajFill::CarryForward;
        let out = run_seed(&cfg, 0, DumpOptions { trajectories: true, das: false }).unwrap();
        assert!(out.trajectory_dump.iter().any(|r| r.carried));
    }
}
