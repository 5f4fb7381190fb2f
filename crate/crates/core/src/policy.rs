//! Epoch-wise pruning policies.
//!
//! A policy turns a per-sample score vector into an [`EpochPlan`]: the ids
//! trained next epoch and a rescale weight for each. The score can be the
//! latest epoch loss or the alignment score; the mean-threshold policy runs
//! the same code for both, the source is only recorded.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    #[default]
    EpochLoss,
    Das,
}

impl ScoreSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreSource::EpochLoss => "epoch_loss",
            ScoreSource::Das => "das",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub source: ScoreSource,
}

impl ScoreVector {
    pub fn new(values: Vec<f64>, source: ScoreSource) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("score {i} is not finite")));
        }
        Ok(Self { values, source })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Train on everything every epoch.
    Full,
    StaticRandom,
    DynamicRandom,
    Infobatch,
    /// Simplified sliding-window reconstruction, reported as `seta-simplified`.
    Seta,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Full => "full",
            PolicyKind::StaticRandom => "static_random",
            PolicyKind::DynamicRandom => "dynamic_random",
            PolicyKind::Infobatch => "infobatch",
            PolicyKind::Seta => "seta-simplified",
        }
    }

    /// Whether this policy ranks samples by score.
    pub fn uses_scores(self) -> bool {
        matches!(self, PolicyKind::Infobatch | PolicyKind::Seta)
    }

    pub fn anneals(self) -> bool {
        self.uses_scores()
    }
}

/// Which samples become pruning candidates under the threshold policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Strictly below the mean score.
    #[default]
    Mean,
    /// Strictly below the q-quantile (linear interpolation).
    Quantile(f64),
    /// Every sample.
    All,
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    pub policy: PolicyKind,
    #[serde(default)]
    pub score_source: ScoreSource,
    /// Prune probability for candidates.
    #[serde(default = "default_r")]
    pub r: f64,
    /// Annealing ratio: no pruning after epoch `ceil(delta * T)`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_seta_alpha")]
    pub seta_alpha: f64,
    #[serde(default = "default_seta_k")]
    pub seta_k: usize,
    /// Mixed into the run seed for the pruning stream.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threshold: Threshold,
    /// Scale kept candidates by `1/(1-r)`.
    #[serde(default = "default_rescale")]
    pub rescale: bool,
    /// Random baselines only; defaults to `1 - r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keep_fraction: Option<f64>,
}

fn default_r() -> f64 {
    0.5
}
fn default_delta() -> f64 {
    0.875
}
fn default_seta_alpha() -> f64 {
    0.9
}
fn default_seta_k() -> usize {
    5
}
fn default_rescale() -> bool {
    true
}

impl PolicyConfig {
    pub fn new(policy: PolicyKind, score_source: ScoreSource, r: f64) -> Self {
        Self {
            policy,
            score_source,
            r,
            delta: default_delta(),
            seta_alpha: default_seta_alpha(),
            seta_k: default_seta_k(),
            seed: 0,
            threshold: Threshold::Mean,
            rescale: true,
            keep_fraction: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.r) {
            return Err(Error::Config(format!("prune probability r must be in [0, 1), got {}", self.r)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("annealing ratio delta must be in (0, 1], got {}", self.delta)));
        }
        if self.policy == PolicyKind::Seta {
            if self.seta_k < 1 {
                return Err(Error::Config("seta_k must be >= 1".into()));
            }
            if !(self.seta_alpha > 0.0 && self.seta_alpha <= 1.0) {
                return Err(Error::Config(format!("seta_alpha must be in (0, 1], got {}", self.seta_alpha)));
            }
        }
        if let Threshold::Quantile(q) = self.threshold {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Config(format!("threshold quantile must be in [0, 1], got {q}")));
            }
        }
        let kf = self.keep_fraction();
        if !(kf > 0.0 && kf <= 1.0) {
            return Err(Error::Config(format!("keep_fraction must be in (0, 1], got {kf}")));
        }
        Ok(())
    }

    pub fn keep_fraction(&self) -> f64 {
        self.keep_fraction.unwrap_or(1.0 - self.r)
    }

    /// Weight given to kept pruning candidates.
    pub fn candidate_weight(&self) -> f64 {
        if self.rescale {
            1.0 / (1.0 - self.r)
        } else {
            1.0
        }
    }
}

/// Last epoch (1-based) on which pruning may happen: `ceil(delta * T)`.
pub fn last_pruning_epoch(delta: f64, total_epochs: usize) -> usize {
    // The epsilon keeps products like 0.7 * 10 from ceiling to 8.
    ((delta * total_epochs as f64) - 1e-9).ceil().max(0.0) as usize
}

pub fn in_annealing_tail(epoch: usize, delta: f64, total_epochs: usize) -> bool {
    epoch > last_pruning_epoch(delta, total_epochs)
}

/// The samples to train in one epoch, with their gradient weights.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPlan {
    pub epoch: usize,
    /// Sorted ascending.
    pub kept: Vec<usize>,
    /// Parallel to `kept`.
    pub weights: Vec<f64>,
    pub pruned_count: usize,
    pub num_samples: usize,
    /// Epochs recorded in the trajectory bank when the scores behind this
    /// plan were computed.
    pub trajectory_epoch: usize,
}

impl EpochPlan {
    pub fn full(num_samples: usize, epoch: usize) -> Self {
        Self {
            epoch,
            kept: (0..num_samples).collect(),
            weights: vec![1.0; num_samples],
            pruned_count: 0,
            num_samples,
            trajectory_epoch: 0,
        }
    }

    fn from_decisions(epoch: usize, decisions: &[Option<f64>]) -> Self {
        let mut kept = Vec::new();
        let mut weights = Vec::new();
        for (id, d) in decisions.iter().enumerate() {
            if let Some(w) = d {
                kept.push(id);
                weights.push(*w);
            }
        }
        Self {
            epoch,
            pruned_count: decisions.len() - kept.len(),
            kept,
            weights,
            num_samples: decisions.len(),
            trajectory_epoch: 0,
        }
    }

    pub fn with_trajectory_epoch(mut self, trajectory_epoch: usize) -> Self {
        self.trajectory_epoch = trajectory_epoch;
        self
    }

    pub fn kept_len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_full_keep(&self) -> bool {
        self.pruned_count == 0 && self.weights.iter().all(|w| *w == 1.0)
    }

    pub fn pruned_fraction(&self) -> f64 {
        if self.num_samples == 0 {
            return 0.0;
        }
        self.pruned_count as f64 / self.num_samples as f64
    }

    /// Per-sample weight over all ids, 0.0 for pruned samples.
    pub fn dense_weights(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_samples];
        for (id, w) in self.kept.iter().zip(&self.weights) {
            out[*id] = *w;
        }
        out
    }

    /// Checks the structural invariants and that every weight is exactly 1
    /// or `candidate_weight`.
    pub fn check(&self, candidate_weight: f64) -> Result<()> {
        if self.kept.len() != self.weights.len() {
            return Err(Error::Invariant("kept ids and weights differ in length".into()));
        }
        if self.kept.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invariant("kept ids not strictly increasing".into()));
        }
        if self.kept.last().is_some_and(|&id| id >= self.num_samples) {
            return Err(Error::Invariant("kept id out of range".into()));
        }
        if self.pruned_count + self.kept.len() != self.num_samples {
            return Err(Error::Invariant("pruned + kept != total".into()));
        }
        if let Some(w) = self.weights.iter().find(|w| **w != 1.0 && **w != candidate_weight) {
            return Err(Error::Invariant(format!(
                "weight {w} is neither 1 nor {candidate_weight}"
            )));
        }
        Ok(())
    }
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn check_scores(scores: &ScoreVector) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty("score vector"));
    }
    if scores.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite score".into()));
    }
    Ok(())
}

/// Mean-threshold pruning with expectation rescaling.
///
/// Samples strictly below the threshold are candidates; each is dropped with
/// probability `r` and otherwise kept with weight `1/(1-r)`. Everything else
/// is kept with weight 1. Random draws happen once per candidate in id order.
pub fn infobatch_plan(
    scores: &ScoreVector,
    cfg: &PolicyConfig,
    epoch: usize,
    total_epochs: usize,
    rng: &mut Rng,
) -> Result<EpochPlan> {
    cfg.validate()?;
    check_scores(scores)?;
    let n = scores.len();
    if in_annealing_tail(epoch, cfg.delta, total_epochs) {
        return Ok(EpochPlan::full(n, epoch));
    }
    let cut = match cfg.threshold {
        Threshold::Mean => scores.values.iter().sum::<f64>() / n as f64,
        Threshold::Quantile(q) => quantile(&scores.values, q),
        Threshold::All => f64::INFINITY,
    };
    let kept_weight = cfg.candidate_weight();
    let decisions: Vec<Option<f64>> = scores
        .values
        .iter()
        .map(|&s| {
            if s < cut {
                (rng.random::<f64>() >= cfg.r).then_some(kept_weight)
            } else {
                Some(1.0)
            }
        })
        .collect();
    Ok(EpochPlan::from_decisions(epoch, &decisions))
}

/// Number of groups in the retained window at a 1-based epoch.
pub fn seta_window_groups(k: usize, alpha: f64, epoch: usize) -> usize {
    let e = epoch.saturating_sub(1) as i32;
    ((k as f64 * alpha.powi(e)).round() as usize).clamp(1, k)
}

/// Simplified sliding-window pruning.
///
/// Samples are ranked from most to least useful (high alignment score, or
/// low loss) and cut into `k` equal groups. A window of
/// `max(1, round(k * alpha^(epoch-1)))` groups at the useful end is
/// retained; samples outside it are dropped. Inside the window each sample
/// is dropped with probability `r` and kept ones are weighted `1/(1-r)`.
pub fn seta_plan(
    scores: &ScoreVector,
    cfg: &PolicyConfig,
    epoch: usize,
    total_epochs: usize,
    rng: &mut Rng,
) -> Result<EpochPlan> {
    cfg.validate()?;
    if cfg.seta_k < 1 || !(cfg.seta_alpha > 0.0 && cfg.seta_alpha <= 1.0) {
        return Err(Error::Config("seta needs k >= 1 and alpha in (0, 1]".into()));
    }
    check_scores(scores)?;
    let n = scores.len();
    if in_annealing_tail(epoch, cfg.delta, total_epochs) {
        return Ok(EpochPlan::full(n, epoch));
    }
    let mut order: Vec<usize> = (0..n).collect();
    match scores.source {
        ScoreSource::Das => order.sort_by(|&a, &b| scores.values[b].total_cmp(&scores.values[a]).then(a.cmp(&b))),
        ScoreSource::EpochLoss => order.sort_by(|&a, &b| scores.values[a].total_cmp(&scores.values[b]).then(a.cmp(&b))),
    }
    let k = cfg.seta_k;
    let groups = seta_window_groups(k, cfg.seta_alpha, epoch);
    let window_len = groups * n / k;
    let mut in_window = vec![false; n];
    for &id in &order[..window_len] {
        in_window[id] = true;
    }
    let kept_weight = cfg.candidate_weight();
    let decisions: Vec<Option<f64>> = in_window
        .iter()
        .map(|&inside| {
            if inside {
                (rng.random::<f64>() >= cfg.r).then_some(kept_weight)
            } else {
                None
            }
        })
        .collect();
    Ok(EpochPlan::from_decisions(epoch, &decisions))
}

fn check_keep_fraction(keep_fraction: f64) -> Result<()> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Config(format!("keep_fraction must be in (0, 1], got {keep_fraction}")));
    }
    Ok(())
}

/// `round(keep_fraction * n)` ids drawn uniformly without replacement, sorted.
pub fn static_random_select(n: usize, keep_fraction: f64, rng: &mut Rng) -> Result<Vec<usize>> {
    check_keep_fraction(keep_fraction)?;
    let count = ((keep_fraction * n as f64).round() as usize).min(n);
    let mut ids: Vec<usize> = (0..n).collect();
    let (chosen, _) = ids.partial_shuffle(rng, count);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// A fresh uniform subset every epoch, all weights 1.
pub fn dynamic_random_plan(n: usize, keep_fraction: f64, epoch: usize, rng: &mut Rng) -> Result<EpochPlan> {
    let kept = static_random_select(n, keep_fraction, rng)?;
    Ok(plan_from_subset(n, kept, epoch))
}

pub fn plan_from_subset(n: usize, kept: Vec<usize>, epoch: usize) -> EpochPlan {
    EpochPlan {
        epoch,
        weights: vec![1.0; kept.len()],
        pruned_count: n - kept.len(),
        kept,
        num_samples: n,
        trajectory_epoch: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    fn rng(seed: u64) -> Rng {
        stream_rng(seed, Stream::Policy)
    }

    fn scores(v: &[f64], source: ScoreSource) -> ScoreVector {
        ScoreVector::new(v.to_vec(), source).unwrap()
    }

    #[test]
    fn zero_r_keeps_everything() {
        let cfg = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::EpochLoss, 0.0);
        let plan = infobatch_plan(&scores(&[1.0, 2.0, 3.0, 10.0], ScoreSource::EpochLoss), &cfg, 1, 10, &mut rng(1)).unwrap();
        assert_eq!(plan.kept, vec![0, 1, 2, 3]);
        assert!(plan.weights.iter().all(|w| *w == 1.0));
        assert!(plan.is_full_keep());
    }

    #[test]
    fn annealing_tail_is_full_keep() {
        let cfg = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::Das, 0.5);
        assert_eq!(last_pruning_epoch(0.875, 200), 175);
        let s = scores(&[0.1, -0.5, 0.9, 0.3], ScoreSource::Das);
        let plan = infobatch_plan(&s, &cfg, 181, 200, &mut rng(2)).unwrap();
        assert!(plan.is_full_keep());
        assert_eq!(plan.kept_len(), 4);
        assert_eq!(last_pruning_epoch(0.7, 10), 7);
    }

    #[test]
    fn rejects_r_of_one() {
        let cfg = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::Das, 1.0);
        assert!(matches!(
            infobatch_plan(&scores(&[1.0], ScoreSource::Das), &cfg, 1, 10, &mut rng(1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn ties_at_the_mean_are_kept() {
        let cfg = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::EpochLoss, 0.99);
        let plan = infobatch_plan(&scores(&[2.0, 2.0, 2.0], ScoreSource::EpochLoss), &cfg, 1, 10, &mut rng(3)).unwrap();
        assert!(plan.is_full_keep());
    }

    #[test]
    fn candidate_keep_frequency() {
        let cfg = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::EpochLoss, 0.5);
        let s = scores(&[1.0, 1.0, 1.0, 5.0], ScoreSource::EpochLoss);
        let trials = 100_000;
        let mut kept = [0usize; 4];
        let mut r = rng(4);
        for _ in 0..trials {
            let plan = infobatch_plan(&s, &cfg, 1, 100, &mut r).unwrap();
            for (id, w) in plan.kept.iter().zip(&plan.weights) {
                kept[*id] += 1;
                assert_eq!(*w, if *id == 3 { 1.0 } else { 2.0 });
            }
        }
        for &count in &kept[..3] {
            let freq = count as f64 / trials as f64;
            assert!((freq - 0.5).abs() < 0.005, "{freq}");
        }
        assert_eq!(kept[3], trials);
    }

    #[test]
    fn quantile_threshold() {
        let mut cfg = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::EpochLoss, 0.99);
        cfg.threshold = Threshold::Quantile(0.5);
        // Median of 1..=5 is 3; candidates are 1 and 2.
        let s = scores(&[5.0, 4.0, 3.0, 2.0, 1.0], ScoreSource::EpochLoss);
        let mut always = [0usize; 5];
        let mut r = rng(5);
        for _ in 0..200 {
            let plan = infobatch_plan(&s, &cfg, 1, 100, &mut r).unwrap();
            for id in plan.kept {
                always[id] += 1;
            }
        }
        assert_eq!(&always[..3], &[200, 200, 200]);
        assert!(always[3] < 200 && always[4] < 200);
    }

    #[test]
    fn rescale_off_gives_unit_weights() {
        let mut cfg = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::Das, 0.5);
        cfg.rescale = false;
        let plan = infobatch_plan(&scores(&[0.0, 1.0, -1.0, 0.5], ScoreSource::Das), &cfg, 1, 10, &mut rng(6)).unwrap();
        assert!(plan.weights.iter().all(|w| *w == 1.0));
        plan.check(cfg.candidate_weight()).unwrap();
    }

    #[test]
    fn seta_degenerate_window_equals_all_candidates() {
        let mut seta = PolicyConfig::new(PolicyKind::Seta, ScoreSource::EpochLoss, 0.3);
        seta.seta_alpha = 1.0;
        seta.seta_k = 1;
        let mut ib = PolicyConfig::new(PolicyKind::Infobatch, ScoreSource::EpochLoss, 0.3);
        ib.threshold = Threshold::All;
        let values: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        for source in [ScoreSource::EpochLoss, ScoreSource::Das] {
            let s = scores(&values, source);
            for epoch in 1..20 {
                let a = seta_plan(&s, &seta, epoch, 100, &mut rng(epoch as u64)).unwrap();
                let b = infobatch_plan(&s, &ib, epoch, 100, &mut rng(epoch as u64)).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn seta_zero_r_inside_full_window_keeps_all() {
        let cfg = PolicyConfig::new(PolicyKind::Seta, ScoreSource::EpochLoss, 0.0);
        let plan = seta_plan(&scores(&[1.0, 2.0, 3.0], ScoreSource::EpochLoss), &cfg, 1, 100, &mut rng(7)).unwrap();
        assert!(plan.is_full_keep());
    }

    #[test]
    fn seta_retains_the_useful_end() {
        let mut cfg = PolicyConfig::new(PolicyKind::Seta, ScoreSource::Das, 0.0);
        cfg.seta_alpha = 0.5;
        cfg.seta_k = 4;
        // Epoch 3: round(4 * 0.25) = 1 group of 2 samples.
        let das = scores(&[0.9, -0.4, 0.1, 0.8, -0.9, 0.0, 0.5, 0.7], ScoreSource::Das);
        let plan = seta_plan(&das, &cfg, 3, 100, &mut rng(8)).unwrap();
        assert_eq!(plan.kept, vec![0, 3]);
        let loss = scores(&[0.9, 0.4, 0.1, 0.8, 2.0, 0.05, 0.5, 0.7], ScoreSource::EpochLoss);
        let plan = seta_plan(&loss, &cfg, 3, 100, &mut rng(8)).unwrap();
        assert_eq!(plan.kept, vec![2, 5]);
    }

    #[test]
    fn seta_rejects_bad_window_params() {
        let mut cfg = PolicyConfig::new(PolicyKind::Seta, ScoreSource::Das, 0.1);
        cfg.seta_k = 0;
        assert!(seta_plan(&scores(&[1.0], ScoreSource::Das), &cfg, 1, 10, &mut rng(1)).is_err());
        cfg.seta_k = 5;
        cfg.seta_alpha = 1.5;
        assert!(seta_plan(&scores(&[1.0], ScoreSource::Das), &cfg, 1, 10, &mut rng(1)).is_err());
    }

    #[test]
    fn seta_pruned_fraction_non_decreasing() {
        // Paper defaults k = 5, alpha = 0.9, r = 0.1 over 200 epochs.
        let cfg = PolicyConfig::new(PolicyKind::Seta, ScoreSource::EpochLoss, 0.1);
        let cfg = PolicyConfig { seta_alpha: 0.9, seta_k: 5, ..cfg };
        let n = 500;
        let values: Vec<f64> = (0..n).map(|i| ((i * 7919) % 1000) as f64).collect();
        let s = scores(&values, ScoreSource::EpochLoss);
        let last = last_pruning_epoch(cfg.delta, 200);
        let seeds = 40;
        let mut mean_pruned = vec![0.0; last];
        for seed in 0..seeds {
            let mut r = rng(seed);
            for epoch in 1..=last {
                let plan = seta_plan(&s, &cfg, epoch, 200, &mut r).unwrap();
                mean_pruned[epoch - 1] += plan.pruned_fraction() / seeds as f64;
            }
        }
        // Monte-Carlo slack: 3 sigma of a mean of 40 * 500 Bernoulli(0.1).
        let slack = 3.0 * (0.1 * 0.9 / (seeds as f64 * n as f64)).sqrt();
        for w in mean_pruned.windows(2) {
            assert!(w[1] >= w[0] - slack, "{} -> {}", w[0], w[1]);
        }
        assert!(mean_pruned[last - 1] > mean_pruned[0]);
        let tail = seta_plan(&s, &cfg, last + 1, 200, &mut rng(0)).unwrap();
        assert!(tail.is_full_keep());
    }

    #[test]
    fn random_baselines() {
        assert_eq!(static_random_select(10, 1.0, &mut rng(1)).unwrap(), (0..10).collect::<Vec<_>>());
        let plan = dynamic_random_plan(1000, 0.5, 1, &mut rng(2)).unwrap();
        assert_eq!(plan.kept_len(), 500);
        assert!(plan.weights.iter().all(|w| *w == 1.0));
        assert!(dynamic_random_plan(10, 0.0, 1, &mut rng(2)).is_err());
        assert!(static_random_select(10, 1.5, &mut rng(2)).is_err());
        let a = static_random_select(100, 0.3, &mut rng(3)).unwrap();
        let b = static_random_select(100, 0.3, &mut rng(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dynamic_random_inclusion_frequency() {
        let n = 200;
        let epochs = 200;
        let kf = 0.3;
        let mut counts = vec![0usize; n];
        let mut r = rng(9);
        for epoch in 1..=epochs {
            for id in dynamic_random_plan(n, kf, epoch, &mut r).unwrap().kept {
                counts[id] += 1;
            }
        }
        let sigma = (epochs as f64 * kf * (1.0 - kf)).sqrt();
        let expect = epochs as f64 * kf;
        // 4 sigma keeps the family-wise false alarm rate small over 200 samples.
        for c in counts {
            assert!((c as f64 - expect).abs() <= 4.0 * sigma, "{c}");
        }
    }

    #[test]
    fn plan_check_catches_bad_weights() {
        let mut plan = EpochPlan::full(3, 1);
        plan.check(2.0).unwrap();
        plan.weights[1] = 1.5;
        assert!(plan.check(2.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn plans_partition_and_weights_are_dichotomous(
                values in prop::collection::vec(-5.0f64..5.0, 1..80),
                r in 0.0f64..0.95,
                seed in 0u64..500,
                epoch in 1usize..120,
                das in any::<bool>(),
                seta in any::<bool>(),
            ) {
                let source = if das { ScoreSource::Das } else { ScoreSource::EpochLoss };
                let kind = if seta { PolicyKind::Seta } else { PolicyKind::Infobatch };
                let cfg = PolicyConfig::new(kind, source, r);
                let s = ScoreVector::new(values.clone(), source).unwrap();
                let plan = if seta {
                    seta_plan(&s, &cfg, epoch, 100, &mut rng(seed)).unwrap()
                } else {
                    infobatch_plan(&s, &cfg, epoch, 100, &mut rng(seed)).unwrap()
                };
                plan.check(1.0 / (1.0 - r)).unwrap();
                prop_assert_eq!(plan.pruned_count, values.len() - plan.kept_len());
                if epoch > 88 {
                    prop_assert!(plan.is_full_keep());
                }
            }
        }
    }
}
