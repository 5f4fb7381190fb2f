//! Samples, datasets and the synthetic Gaussian-blob task.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// One labelled example.
///
/// `true_label` and `is_flipped` are ground truth kept for metrics only; the
/// trainer and the pruning policies read `noisy_label`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    id: usize,
    features: Vec<f64>,
    noisy_label: usize,
    true_label: usize,
    is_flipped: bool,
}

impl Sample {
    pub fn clean(id: usize, features: Vec<f64>, label: usize) -> Self {
        Self {
            id,
            features,
            noisy_label: label,
            true_label: label,
            is_flipped: false,
        }
    }

    pub fn with_labels(id: usize, features: Vec<f64>, noisy_label: usize, true_label: usize) -> Self {
        Self {
            id,
            features,
            noisy_label,
            true_label,
            is_flipped: noisy_label != true_label,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn noisy_label(&self) -> usize {
        self.noisy_label
    }

    pub fn true_label(&self) -> usize {
        self.true_label
    }

    pub fn is_flipped(&self) -> bool {
        self.is_flipped
    }

    /// Replaces the observed label, keeping the flip flag consistent.
    pub fn set_noisy_label(&mut self, label: usize) {
        self.noisy_label = label;
        self.is_flipped = label != self.true_label;
    }

    pub fn restore_true_label(&mut self) {
        self.set_noisy_label(self.true_label);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Reference,
    Test,
}

/// An ordered collection of samples with contiguous ids `0..len`.
///
/// `origin` maps each local id back to its id in the pool the dataset was
/// carved from, which is how disjointness between splits is checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    num_classes: usize,
    split: SplitTag,
    origin: Vec<usize>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, num_classes: usize, split: SplitTag) -> Result<Self> {
        let origin = (0..samples.len()).collect();
        Self::with_origin(samples, num_classes, split, origin)
    }

    pub fn with_origin(
        samples: Vec<Sample>,
        num_classes: usize,
        split: SplitTag,
        origin: Vec<usize>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {num_classes}")));
        }
        if origin.len() != samples.len() {
            return Err(Error::Invariant("origin map length differs from sample count".into()));
        }
        let dim = samples.first().map(|s| s.features.len());
        for (pos, s) in samples.iter().enumerate() {
            if s.id != pos {
                return Err(Error::Invariant(format!("sample at position {pos} has id {}", s.id)));
            }
            if s.noisy_label >= num_classes || s.true_label >= num_classes {
                return Err(Error::InvalidInput(format!(
                    "sample {pos} label out of range for {num_classes} classes"
                )));
            }
            if Some(s.features.len()) != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim.unwrap_or(0),
                    got: s.features.len(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("sample {pos} has non-finite features")));
            }
        }
        Ok(Self {
            samples,
            num_classes,
            split,
            origin,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> SplitTag {
        self.split
    }

    /// Feature dimension, 0 for an empty dataset.
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, id: usize) -> Result<&Sample> {
        self.samples.get(id).ok_or(Error::UnknownId(id))
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    pub fn origin_of(&self, id: usize) -> Result<usize> {
        self.origin.get(id).copied().ok_or(Error::UnknownId(id))
    }

    pub(crate) fn samples_mut(&mut self) -> &mut [Sample] {
        &mut self.samples
    }

    pub fn is_clean(&self) -> bool {
        self.samples.iter().all(|s| !s.is_flipped)
    }

    pub fn flipped_count(&self) -> usize {
        self.samples.iter().filter(|s| s.is_flipped).count()
    }

    /// Fraction of samples whose observed label differs from the true label.
    pub fn noise_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.flipped_count() as f64 / self.len() as f64
    }

    /// Re-indexed copy of the listed samples; origins are carried through.
    pub fn subset(&self, ids: &[usize], split: SplitTag) -> Result<Dataset> {
        let mut samples = Vec::with_capacity(ids.len());
        let mut origin = Vec::with_capacity(ids.len());
        for (pos, &id) in ids.iter().enumerate() {
            let mut s = self.get(id)?.clone();
            s.id = pos;
            samples.push(s);
            origin.push(self.origin[id]);
        }
        Dataset::with_origin(samples, self.num_classes, split, origin)
    }

    /// Per-class sample ids, in id order.
    pub fn ids_by_true_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for s in &self.samples {
            by_class[s.true_label].push(s.id);
        }
        by_class
    }

    pub fn is_disjoint_from(&self, other: &Dataset) -> bool {
        let mine: HashSet<usize> = self.origin.iter().copied().collect();
        other.origin.iter().all(|o| !mine.contains(o))
    }
}

/// Isotropic Gaussian clusters, one per class, with balanced class sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobsSpec {
    pub n: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    pub d: usize,
    pub classes: usize,
    pub cluster_std: f64,
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_test() -> usize {
    500
}

fn default_center_scale() -> f64 {
    1.0
}

impl Default for BlobsSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            n_test: default_n_test(),
            d: 32,
            classes: 10,
            cluster_std: 2.0,
            center_scale: default_center_scale(),
            seed: 0,
        }
    }
}

impl BlobsSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_test == 0 || self.d == 0 {
            return Err(Error::Config("blobs need n, n_test and d > 0".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("blobs need at least 2 classes".into()));
        }
        if !(self.cluster_std.is_finite() && self.cluster_std > 0.0) {
            return Err(Error::Config(format!("cluster_std must be > 0, got {}", self.cluster_std)));
        }
        if !(self.center_scale.is_finite() && self.center_scale > 0.0) {
            return Err(Error::Config("center_scale must be > 0".into()));
        }
        Ok(())
    }

    /// Returns `(train pool, clean test set)`, both drawn around the same centers.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let mut rng = stream_rng(self.seed, Stream::Data);
        let center_dist = Normal::new(0.0, self.center_scale).expect("validated scale");
        let noise = Normal::new(0.0, self.cluster_std).expect("validated std");
        let centers: Vec<Vec<f64>> = (0..self.classes)
            .map(|_| (0..self.d).map(|_| center_dist.sample(&mut rng)).collect())
            .collect();

        let draw = |count: usize, split: SplitTag, rng: &mut crate::rng::Rng| {
            let mut labels: Vec<usize> = (0..count).map(|i| i % self.classes).collect();
            labels.shuffle(rng);
            let samples = labels
                .into_iter()
                .enumerate()
                .map(|(id, label)| {
                    let x = centers[label].iter().map(|c| c + noise.sample(rng)).collect();
                    Sample::clean(id, x, label)
                })
                .collect();
            Dataset::new(samples, self.classes, split)
        };
        let train = draw(self.n, SplitTag::Train, &mut rng)?;
        let test = draw(self.n_test, SplitTag::Test, &mut rng)?;
        Ok((train, test))
    }
}

/// Reads `id,label,f0,f1,...` rows (header required). Rows are re-indexed in
/// file order; the id column only has to be unique.
pub fn load_csv(path: &Path, num_classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 3 {
            return Err(Error::InvalidInput(format!("row {row}: need id, label and features")));
        }
        let parse = |i: usize| -> Result<f64> {
            record[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidInput(format!("row {row} column {i}: {e}")))
        };
        let ext_id = record[0].trim().to_owned();
        if !seen.insert(ext_id.clone()) {
            return Err(Error::InvalidInput(format!("duplicate id {ext_id}")));
        }
        let label: usize = record[1]
            .trim()
            .parse()
            .map_err(|e| Error::InvalidInput(format!("row {row} label: {e}")))?;
        let features = (2..record.len()).map(parse).collect::<Result<Vec<_>>>()?;
        rows.push((label, features));
    }
    if rows.is_empty() {
        return Err(Error::Empty("csv dataset"));
    }
    let inferred = rows.iter().map(|(l, _)| l + 1).max().unwrap_or(0);
    let classes = num_classes.unwrap_or(inferred);
    if classes < inferred {
        return Err(Error::InvalidInput(format!(
            "label {} exceeds declared class count {classes}",
            inferred - 1
        )));
    }
    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(id, (label, x))| Sample::clean(id, x, label))
        .collect();
    Dataset::new(samples, classes, SplitTag::Train)
}
