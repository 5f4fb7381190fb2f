//! Label-noise injection with exact flip counts.
//!
//! Every injector picks which samples to flip uniformly without replacement
//! and flips exactly `round(rate * count)` of them, so the realised noise
//! rate is deterministic and only the positions are random. Features and
//! true labels are never touched.

use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    /// Per class, a fraction of samples moves to the next class (wrapping).
    SymmetricConsecutive,
    /// A fraction of all samples gets a uniformly random other class.
    UniformSymmetric,
    /// A fraction of all samples gets another class from its superclass group.
    AsymmetricSuperclass,
    /// Same procedure as `SymmetricConsecutive`.
    Pairflip,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::SymmetricConsecutive => "symmetric_consecutive",
            NoiseKind::UniformSymmetric => "uniform_symmetric",
            NoiseKind::AsymmetricSuperclass => "asymmetric_superclass",
            NoiseKind::Pairflip => "pairflip",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    #[serde(default)]
    pub rate: f64,
    /// class -> group, required shape for `asymmetric_superclass`; when absent,
    /// classes are grouped consecutively by `superclass_group_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superclass_map: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superclass_group_size: Option<usize>,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::new(NoiseKind::None, 0.0)
    }

    pub fn new(kind: NoiseKind, rate: f64) -> Self {
        Self {
            kind,
            rate,
            superclass_map: None,
            superclass_group_size: None,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        check_rate(self.rate)?;
        if self.kind == NoiseKind::AsymmetricSuperclass {
            let map = self.resolved_superclass_map(num_classes)?;
            validate_superclass_map(&map, num_classes)?;
        }
        Ok(())
    }

    pub fn resolved_superclass_map(&self, num_classes: usize) -> Result<Vec<usize>> {
        match &self.superclass_map {
            Some(map) => Ok(map.clone()),
            None => consecutive_groups(num_classes, self.superclass_group_size.unwrap_or(2)),
        }
    }

    pub fn apply(&self, dataset: &Dataset, seed_rng: &mut Rng) -> Result<Dataset> {
        self.validate(dataset.num_classes())?;
        match self.kind {
            NoiseKind::None => {
                ensure_clean(dataset)?;
                Ok(dataset.clone())
            }
            NoiseKind::SymmetricConsecutive => inject_symmetric_consecutive(dataset, self.rate, seed_rng),
            NoiseKind::Pairflip => inject_pairflip(dataset, self.rate, seed_rng),
            NoiseKind::UniformSymmetric => inject_uniform_symmetric(dataset, self.rate, seed_rng),
            NoiseKind::AsymmetricSuperclass => {
                let map = self.resolved_superclass_map(dataset.num_classes())?;
                inject_asymmetric_superclass(dataset, self.rate, &map, seed_rng)
            }
        }
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("noise rate must be in [0, 1), got {rate}")));
    }
    Ok(())
}

fn ensure_clean(dataset: &Dataset) -> Result<()> {
    if !dataset.is_clean() {
        return Err(Error::InvalidInput("noise injection expects a clean dataset".into()));
    }
    Ok(())
}

fn flip_count(rate: f64, n: usize) -> usize {
    ((rate * n as f64).round() as usize).min(n)
}

/// Classes `0..c` grouped as `[0, size)`, `[size, 2*size)`, ...; a short
/// trailing group is merged into the one before it.
pub fn consecutive_groups(num_classes: usize, size: usize) -> Result<Vec<usize>> {
    if size < 2 || size > num_classes {
        return Err(Error::Config(format!(
            "superclass group size must be in [2, {num_classes}], got {size}"
        )));
    }
    let full_groups = num_classes / size;
    Ok((0..num_classes).map(|c| (c / size).min(full_groups - 1)).collect())
}

pub fn validate_superclass_map(map: &[usize], num_classes: usize) -> Result<()> {
    if map.len() != num_classes {
        return Err(Error::Config(format!(
            "superclass map covers {} classes, dataset has {num_classes}",
            map.len()
        )));
    }
    let groups = map.iter().max().map_or(0, |g| g + 1);
    let mut sizes = vec![0usize; groups];
    for &g in map {
        sizes[g] += 1;
    }
    if let Some(g) = sizes.iter().position(|&s| s == 1) {
        return Err(Error::Config(format!("superclass group {g} has a single member")));
    }
    Ok(())
}

/// Per class `c`, exactly `round(rate * n_c)` samples are relabelled `(c + 1) mod C`.
pub fn inject_symmetric_consecutive(dataset: &Dataset, rate: f64, rng: &mut Rng) -> Result<Dataset> {
    check_rate(rate)?;
    ensure_clean(dataset)?;
    let c = dataset.num_classes();
    let mut out = dataset.clone();
    for (class, mut ids) in dataset.ids_by_true_class().into_iter().enumerate() {
        let k = flip_count(rate, ids.len());
        let (chosen, _) = ids.partial_shuffle(rng, k);
        for &id in chosen.iter() {
            out.samples_mut()[id].set_noisy_label((class + 1) % c);
        }
    }
    Ok(out)
}

/// Pairflip noise; the same procedure as [`inject_symmetric_consecutive`].
pub fn inject_pairflip(dataset: &Dataset, rate: f64, rng: &mut Rng) -> Result<Dataset> {
    inject_symmetric_consecutive(dataset, rate, rng)
}

fn select_global(dataset: &Dataset, rate: f64, rng: &mut Rng) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..dataset.len()).collect();
    let k = flip_count(rate, ids.len());
    let (chosen, _) = ids.partial_shuffle(rng, k);
    let mut chosen = chosen.to_vec();
    // Relabel in id order so the label draws do not depend on selection order.
    chosen.sort_unstable();
    chosen
}

pub fn inject_uniform_symmetric(dataset: &Dataset, rate: f64, rng: &mut Rng) -> Result<Dataset> {
    check_rate(rate)?;
    ensure_clean(dataset)?;
    let c = dataset.num_classes();
    let mut out = dataset.clone();
    for id in select_global(dataset, rate, rng) {
        let truth = dataset.samples()[id].true_label();
        let others: Vec<usize> = (0..c).filter(|&k| k != truth).collect();
        let label = *others.choose(rng).expect("at least two classes");
        out.samples_mut()[id].set_noisy_label(label);
    }
    Ok(out)
}

pub fn inject_asymmetric_superclass(
    dataset: &Dataset,
    rate: f64,
    superclass_map: &[usize],
    rng: &mut Rng,
) -> Result<Dataset> {
    check_rate(rate)?;
    ensure_clean(dataset)?;
    validate_superclass_map(superclass_map, dataset.num_classes())?;
    let mut out = dataset.clone();
    for id in select_global(dataset, rate, rng) {
        let truth = dataset.samples()[id].true_label();
        let group = superclass_map[truth];
        let partners: Vec<usize> = (0..superclass_map.len())
            .filter(|&k| k != truth && superclass_map[k] == group)
            .collect();
        let label = *partners.choose(rng).expect("validated group size >= 2");
        out.samples_mut()[id].set_noisy_label(label);
    }
    Ok(out)
}
