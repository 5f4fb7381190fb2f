//! Run configuration, read from JSON. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::das::CorrelationKind;
use crate::data::BlobsSpec;
use crate::error::{Error, Result};
use crate::noise::NoiseSpec;
use crate::policy::PolicyConfig;
use crate::trainer::{Architecture, TrainerConfig};
use crate::trajectory::TrajFill;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs(BlobsSpec),
    /// `id,label,features...` with a header row; a seeded random
    /// `test_fraction` is held out as the clean test split.
    Csv {
        path: PathBuf,
        #[serde(default)]
        num_classes: Option<usize>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSpec {
    /// Random held-out subset with true labels restored.
    HeldOutClean { fraction: f64 },
    /// Smallest-loss subset under a probe model, noisy labels kept.
    PseudoSmallLoss { fraction: f64, probe_epochs: usize },
    /// Random held-out subset with noisy labels kept.
    NoisyRandom { fraction: f64 },
    /// Clean held-out subset with `rate` of its labels re-flipped uniformly.
    ReferenceNoise { fraction: f64, rate: f64 },
}

impl ReferenceSpec {
    pub fn fraction(&self) -> f64 {
        match *self {
            ReferenceSpec::HeldOutClean { fraction }
            | ReferenceSpec::PseudoSmallLoss { fraction, .. }
            | ReferenceSpec::NoisyRandom { fraction }
            | ReferenceSpec::ReferenceNoise { fraction, .. } => fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DasConfig {
    /// Trajectory window N, in epochs.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Alignment scores are used only once windows hold this many epochs.
    #[serde(default = "default_min_window")]
    pub min_window: usize,
    #[serde(default)]
    pub correlation: CorrelationKind,
    #[serde(default)]
    pub traj_fill: TrajFill,
}

fn default_window() -> usize {
    25
}

fn default_min_window() -> usize {
    2
}

impl Default for DasConfig {
    fn default() -> Self {
        Self {
            window: default_window(),
            min_window: default_min_window(),
            correlation: CorrelationKind::Pearson,
            traj_fill: TrajFill::CarryForward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub noise: NoiseSpec,
    pub reference: ReferenceSpec,
    pub model: Architecture,
    pub trainer: TrainerConfig,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub das: DasConfig,
    #[serde(default)]
    pub target_prune_ratio: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Adds `wall_ms` to each metrics line; makes output non-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(Error::Config(format!("run name {:?} must be non-empty and path-free", self.name)));
        }
        match &self.dataset {
            DatasetSpec::Blobs(b) => b.validate()?,
            DatasetSpec::Csv { test_fraction, .. } => {
                if !(*test_fraction > 0.0 && *test_fraction < 1.0) {
                    return Err(Error::Config("csv test_fraction must be in (0, 1)".into()));
                }
            }
        }
        let fraction = self.reference.fraction();
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Config(format!("reference fraction must be in (0, 1), got {fraction}")));
        }
        if let ReferenceSpec::ReferenceNoise { rate, .. } = self.reference {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config("reference noise rate must be in [0, 1)".into()));
            }
        }
        if let ReferenceSpec::PseudoSmallLoss { probe_epochs, .. } = self.reference {
            if probe_epochs == 0 {
                return Err(Error::Config("probe_epochs must be > 0".into()));
            }
        }
        self.trainer.validate()?;
        self.policy.validate()?;
        if self.das.window == 0 {
            return Err(Error::Config("das.window must be > 0".into()));
        }
        if self.das.min_window == 0 || self.das.min_window > self.das.window {
            return Err(Error::Config(format!(
                "das.min_window must be in [1, window={}], got {}",
                self.das.window, self.das.min_window
            )));
        }
        if !(0.0..1.0).contains(&self.target_prune_ratio) {
            return Err(Error::Config(format!(
                "target_prune_ratio must be in [0, 1), got {}",
                self.target_prune_ratio
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }

    /// File stem for one seed's outputs.
    pub fn run_stem(&self, seed: u64) -> String {
        format!("{}__seed{seed}", self.name)
    }
}

/// A list of runs executed together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub runs: Vec<RunConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl SweepConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if cfg.runs.is_empty() {
            return Err(Error::Config("sweep needs at least one run".into()));
        }
        for run in &cfg.runs {
            run.validate()?;
        }
        Ok(cfg)
    }
}
