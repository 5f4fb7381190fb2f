use serde::{Deserialize, Serialize};

/// Forward-pass budget matching a target prune ratio.
///
/// `full_pass_budget = ceil((1 - ratio) * n * T)`; a run stops after the
/// first epoch that brings `consumed` to or past it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub full_pass_budget: u64,
    pub consumed: u64,
    pub num_samples: u64,
}

impl Budget {
    pub fn new(target_prune_ratio: f64, num_samples: usize, total_epochs: usize) -> Self {
        let full = (1.0 - target_prune_ratio) * num_samples as f64 * total_epochs as f64;
        // Trim float noise like 0.7 * 1000 * 10 = 7000.000000000001 before the ceiling.
        let full_pass_budget = (full - 1e-9).ceil().max(0.0) as u64;
        Self {
            full_pass_budget,
            consumed: 0,
            num_samples: num_samples as u64,
        }
    }

    pub fn consume(&mut self, trained: usize) {
        self.consumed += trained as u64;
    }

    pub fn exhausted(&self) -> bool {
        self.consumed >= self.full_pass_budget
    }

    /// `|consumed - budget| <= n`.
    pub fn within_one_epoch(&self) -> bool {
        self.consumed.abs_diff(self.full_pass_budget) <= self.num_samples
    }
}
