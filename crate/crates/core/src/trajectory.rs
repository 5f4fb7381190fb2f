//! Sliding-window loss memory: one ring buffer per training sample plus a
//! ring buffer of mean reference losses, written in lockstep once per epoch.
//!
//! Every sample receives a value every epoch. Samples that were not trained
//! repeat their last observed loss, so all windows have the same length as
//! the reference window and can be correlated position by position.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::trainer::Model;

/// How pruned samples' slots are filled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajFill {
    /// Repeat the last observed loss.
    #[default]
    CarryForward,
    /// Evaluate pruned samples on the end-of-epoch model.
    Reevaluate,
}

/// Fixed-capacity ring of `width` parallel series sharing one write head.
#[derive(Debug, Clone, PartialEq)]
struct Ring {
    window: usize,
    width: usize,
    values: Vec<f64>,
    head: usize,
    filled: usize,
}

impl Ring {
    fn new(window: usize, width: usize) -> Self {
        Self {
            window,
            width,
            values: vec![0.0; window * width],
            head: 0,
            filled: 0,
        }
    }

    fn slot(&mut self, series: usize) -> &mut f64 {
        &mut self.values[series * self.window + self.head]
    }

    fn advance(&mut self) {
        self.head = (self.head + 1) % self.window;
        self.filled = (self.filled + 1).min(self.window);
    }

    /// Oldest-to-newest copy of one series into `out`.
    fn read_into(&self, series: usize, out: &mut Vec<f64>) {
        out.clear();
        let row = &self.values[series * self.window..(series + 1) * self.window];
        let start = (self.head + self.window - self.filled) % self.window;
        out.extend((0..self.filled).map(|k| row[(start + k) % self.window]));
    }

    fn newest(&self, series: usize) -> Option<f64> {
        (self.filled > 0).then(|| self.values[series * self.window + (self.head + self.window - 1) % self.window])
    }
}

/// Per-sample loss trajectories over the last `window` epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBank {
    ring: Ring,
    last_observed: Vec<Option<f64>>,
    carried: Vec<bool>,
    epochs_recorded: usize,
}

/// One line of the optional trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub epoch: usize,
    pub id: usize,
    pub loss: f64,
    pub carried: bool,
}

impl TrajectoryBank {
    pub fn new(num_samples: usize, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("trajectory window must be > 0".into()));
        }
        Ok(Self {
            ring: Ring::new(window, num_samples),
            last_observed: vec![None; num_samples],
            carried: vec![false; num_samples],
            epochs_recorded: 0,
        })
    }

    pub fn window_size(&self) -> usize {
        self.ring.window
    }

    pub fn num_samples(&self) -> usize {
        self.ring.width
    }

    pub fn epochs_recorded(&self) -> usize {
        self.epochs_recorded
    }

    /// Current window length, `min(N, epochs_recorded)`. Identical for every
    /// sample because every sample is written every epoch.
    pub fn fill_count(&self) -> usize {
        self.ring.filled
    }

    /// Records one epoch. `observed` holds `(id, loss)` for every sample that
    /// has a fresh loss this epoch; repeated ids are averaged. Every other
    /// sample carries its last observed loss forward.
    ///
    /// `epoch` must be exactly one past the last recorded epoch.
    pub fn record_epoch_losses(&mut self, epoch: usize, observed: &[(usize, f64)]) -> Result<()> {
        if epoch != self.epochs_recorded + 1 {
            return Err(Error::InvalidInput(format!(
                "expected epoch {}, got {epoch}",
                self.epochs_recorded + 1
            )));
        }
        let n = self.num_samples();
        let mut sums = vec![0.0; n];
        let mut counts = vec![0u32; n];
        for &(id, loss) in observed {
            if id >= n {
                return Err(Error::UnknownId(id));
            }
            if !loss.is_finite() || loss < 0.0 {
                return Err(Error::InvalidInput(format!("loss for sample {id} is {loss}")));
            }
            sums[id] += loss;
            counts[id] += 1;
        }
        if let Some(missing) = (0..n).find(|&i| counts[i] == 0 && self.last_observed[i].is_none()) {
            return Err(Error::InvalidInput(format!(
                "sample {missing} has no loss to carry forward"
            )));
        }
        for id in 0..n {
            let value = if counts[id] > 0 {
                let v = sums[id] / f64::from(counts[id]);
                self.last_observed[id] = Some(v);
                self.carried[id] = false;
                v
            } else {
                self.carried[id] = true;
                self.last_observed[id].expect("checked above")
            };
            *self.ring.slot(id) = value;
        }
        self.ring.advance();
        self.epochs_recorded = epoch;
        Ok(())
    }

    pub fn read_window(&self, id: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.ring.filled);
        self.read_window_into(id, &mut out)?;
        Ok(out)
    }

    pub fn read_window_into(&self, id: usize, out: &mut Vec<f64>) -> Result<()> {
        if id >= self.num_samples() {
            return Err(Error::UnknownId(id));
        }
        if self.epochs_recorded == 0 {
            return Err(Error::Empty("trajectory bank"));
        }
        self.ring.read_into(id, out);
        Ok(())
    }

    /// Most recent value for each sample (fresh or carried).
    pub fn latest(&self) -> Result<Vec<f64>> {
        (0..self.num_samples())
            .map(|i| self.ring.newest(i).ok_or(Error::Empty("trajectory bank")))
            .collect()
    }

    /// Whether the most recent value for `id` was carried forward.
    pub fn was_carried(&self, id: usize) -> bool {
        self.carried.get(id).copied().unwrap_or(false)
    }

    /// Dump lines for the most recently recorded epoch.
    pub fn latest_records(&self) -> Vec<TrajectoryRecord> {
        (0..self.num_samples())
            .filter_map(|id| {
                self.ring.newest(id).map(|loss| TrajectoryRecord {
                    epoch: self.epochs_recorded,
                    id,
                    loss,
                    carried: self.carried[id],
                })
            })
            .collect()
    }
}

/// Mean reference loss per epoch over the last `window` epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    ring: Ring,
    epochs_recorded: usize,
}

impl ReferenceTrajectory {
    pub fn new(window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("trajectory window must be > 0".into()));
        }
        Ok(Self {
            ring: Ring::new(window, 1),
            epochs_recorded: 0,
        })
    }

    pub fn window_size(&self) -> usize {
        self.ring.window
    }

    pub fn fill_count(&self) -> usize {
        self.ring.filled
    }

    pub fn epochs_recorded(&self) -> usize {
        self.epochs_recorded
    }

    pub fn push(&mut self, epoch: usize, mean_loss: f64) -> Result<()> {
        if epoch != self.epochs_recorded + 1 {
            return Err(Error::InvalidInput(format!(
                "expected epoch {}, got {epoch}",
                self.epochs_recorded + 1
            )));
        }
        if !mean_loss.is_finite() {
            return Err(Error::InvalidInput(format!("reference loss is {mean_loss}")));
        }
        *self.ring.slot(0) = mean_loss;
        self.ring.advance();
        self.epochs_recorded = epoch;
        Ok(())
    }

    /// Evaluates the mean loss of `model` on `reference_set` and appends it.
    /// Returns the pushed value.
    pub fn record_reference_loss(&mut self, epoch: usize, model: &Model, reference_set: &Dataset) -> Result<f64> {
        if reference_set.is_empty() {
            return Err(Error::Empty("reference set"));
        }
        let mean = model.mean_loss(reference_set)?;
        self.push(epoch, mean)?;
        Ok(mean)
    }

    pub fn read(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.ring.filled);
        self.ring.read_into(0, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sample, SplitTag};
    use crate::trainer::Architecture;

    #[test]
    fn first_write_then_carry_forward() {
        let mut bank = TrajectoryBank::new(2, 5).unwrap();
        bank.record_epoch_losses(1, &[(0, 2.0), (1, 3.0)]).unwrap();
        assert_eq!(bank.read_window(0).unwrap(), vec![2.0]);
        assert_eq!(bank.read_window(1).unwrap(), vec![3.0]);
        assert_eq!(bank.fill_count(), 1);
        bank.record_epoch_losses(2, &[(0, 1.5)]).unwrap();
        assert_eq!(bank.read_window(1).unwrap(), vec![3.0, 3.0]);
        assert!(bank.was_carried(1));
        assert!(!bank.was_carried(0));
    }

    #[test]
    fn ring_keeps_last_window() {
        let mut bank = TrajectoryBank::new(1, 3).unwrap();
        for (e, loss) in [5.0, 4.0, 3.0, 2.0, 1.0].into_iter().enumerate() {
            bank.record_epoch_losses(e + 1, &[(0, loss)]).unwrap();
        }
        assert_eq!(bank.read_window(0).unwrap(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn duplicate_visits_are_averaged() {
        let mut bank = TrajectoryBank::new(1, 3).unwrap();
        bank.record_epoch_losses(1, &[(0, 1.0), (0, 3.0)]).unwrap();
        assert_eq!(bank.read_window(0).unwrap(), vec![2.0]);
    }

    #[test]
    fn rejects_bad_epochs_and_ids() {
        let mut bank = TrajectoryBank::new(2, 3).unwrap();
        assert!(bank.read_window(0).is_err());
        assert!(bank.record_epoch_losses(1, &[(0, 1.0)]).is_err(), "sample 1 has nothing to carry");
        bank.record_epoch_losses(1, &[(0, 1.0), (1, 1.0)]).unwrap();
        assert!(bank.record_epoch_losses(1, &[(0, 1.0), (1, 1.0)]).is_err());
        assert!(bank.record_epoch_losses(2, &[(2, 1.0)]).is_err());
        assert!(matches!(bank.read_window(7), Err(Error::UnknownId(7))));
    }

    #[test]
    fn reference_means() {
        let ds = Dataset::new(
            vec![Sample::clean(0, vec![1.0], 0), Sample::clean(1, vec![-1.0], 1)],
            2,
            SplitTag::Reference,
        )
        .unwrap();
        // logits = [x, 0]: losses ln(1+e^-1) and ln(1+e^-1) for (x=1,label 0) and (x=-1,label 1).
        let model = Model::from_params(Architecture::Linear, 1, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let mut reference = ReferenceTrajectory::new(4).unwrap();
        let pushed = reference.record_reference_loss(1, &model, &ds).unwrap();
        let want = (1.0 + (-1f64).exp()).ln();
        assert!((pushed - want).abs() < 1e-15);

        let empty = Dataset::new(Vec::new(), 2, SplitTag::Reference).unwrap();
        assert!(reference.record_reference_loss(2, &model, &empty).is_err());

        let mut r = ReferenceTrajectory::new(2).unwrap();
        r.push(1, 1.0).unwrap();
        r.push(2, 3.0).unwrap();
        r.push(3, 2.0).unwrap();
        assert_eq!(r.read(), vec![3.0, 2.0]);
        assert!(r.push(5, 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// Window read-out equals the tail of an append-only shadow log,
            /// where pruned epochs append the previous value.
            #[test]
            fn matches_shadow_log(
                window in 1usize..8,
                steps in prop::collection::vec((0.0f64..10.0, any::<bool>()), 1..40)
            ) {
                let mut bank = TrajectoryBank::new(1, window).unwrap();
                let mut reference = ReferenceTrajectory::new(window).unwrap();
                let mut log: Vec<f64> = Vec::new();
                for (epoch, (loss, trained)) in steps.iter().enumerate() {
                    let trained = *trained || epoch == 0;
                    let obs: Vec<(usize, f64)> = if trained { vec![(0, *loss)] } else { vec![] };
                    bank.record_epoch_losses(epoch + 1, &obs).unwrap();
                    reference.push(epoch + 1, *loss).unwrap();
                    let value = if trained { *loss } else { *log.last().unwrap() };
                    log.push(value);
                    let tail = &log[log.len().saturating_sub(window)..];
                    prop_assert_eq!(bank.read_window(0).unwrap(), tail.to_vec());
                    prop_assert_eq!(bank.fill_count(), reference.fill_count());
                    prop_assert_eq!(bank.fill_count(), (epoch + 1).min(window));
                }
            }
        }
    }
}
