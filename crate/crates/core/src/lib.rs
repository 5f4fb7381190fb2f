//! Dynamic data pruning for training under label noise.
//!
//! Each sample's recent loss trajectory is correlated with the mean loss
//! trajectory of a small reference set; the resulting alignment score (DAS)
//! replaces the raw loss as the ranking signal of InfoBatch-style and
//! SeTa-style pruning policies. The [`harness`] module runs whole
//! experiments on synthetic or CSV data and writes JSONL metrics;
//! [`report`] turns sweeps into comparison tables.

pub mod das;
pub mod data;
pub mod error;
pub mod harness;
pub mod noise;
pub mod policy;
pub mod report;
pub mod rng;
pub mod trainer;
pub mod trajectory;

pub use das::{compute_das_all, correlate, pearson, CorrelationKind, DasRecord, DasScores};
pub use data::{load_csv, BlobsSpec, Dataset, Sample, SplitTag};
pub use error::{Error, Result};
pub use harness::{
    run_experiment, run_seed, sweep, Budget, DumpOptions, Experiment, MetricsRecord, RunConfig, RunLine, RunStatus,
    SeedOutcome, SweepConfig,
};
pub use noise::{NoiseKind, NoiseSpec};
pub use policy::{EpochPlan, PolicyConfig, PolicyKind, ScoreSource, ScoreVector, Threshold};
pub use rng::{Rng, Stream};
pub use trainer::{Architecture, LabelSource, LrSchedule, Model, TrainerConfig};
pub use trajectory::{ReferenceTrajectory, TrajFill, TrajectoryBank, TrajectoryRecord};
