use std::time::Duration;

use serde::{Deserialize, Serialize};

/// What the safeguard did with an iteration's low-rank candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepOutcome {
    Accepted,
    /// The first candidate raised the loss; a re-seeded retry was kept.
    Retried,
    /// Both candidates raised the loss; the previous factors were kept.
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Loss after the low-rank step, `‖(W − L_t − S_{t−1})·D‖_F`.
    pub after_lowrank: f64,
    /// Loss after the sparsify step, `‖(W − L_t − S_t)·D‖_F`.
    pub after_sparsify: f64,
    pub outcome: StepOutcome,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// Per-iteration losses of one compression run.
///
/// Two reference losses are kept so the trace can be normalized either way:
/// `raw_initial` is `‖W·D‖_F` (everything zeroed) and `one_shot` is the loss
/// of the zero-iteration baseline (preserved + sparse part, no low-rank).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub raw_initial: f64,
    pub one_shot: f64,
    pub records: Vec<IterationRecord>,
    pub stopped_early_at: Option<usize>,
}

impl ConvergenceTrace {
    pub fn final_loss(&self) -> f64 {
        self.records
            .last()
            .map_or(self.one_shot, |r| r.after_sparsify)
    }

    /// `E¹₁, E²₁, E¹₂, E²₂, …`
    pub fn chain(&self) -> Vec<f64> {
        self.records
            .iter()
            .flat_map(|r| [r.after_lowrank, r.after_sparsify])
            .collect()
    }

    /// True when every element of [`chain`](Self::chain) is at most its
    /// predecessor plus `tol`.
    pub fn is_monotone(&self, tol: f64) -> bool {
        self.chain().windows(2).all(|w| w[1] <= w[0] + tol)
    }

    /// Steps `t → t+1` where the low-rank update raised the loss, as
    /// `(iteration, relative increase)`.
    pub fn lowrank_increases(&self) -> Vec<(usize, f64)> {
        self.records
            .windows(2)
            .filter(|w| w[1].after_lowrank > w[0].after_sparsify)
            .map(|w| {
                let base = w[0].after_sparsify;
                let rel = if base > 0.0 {
                    (w[1].after_lowrank - base) / base
                } else {
                    f64::INFINITY
                };
                (w[1].iteration, rel)
            })
            .collect()
    }

    pub fn count(&self, outcome: StepOutcome) -> usize {
        self.records.iter().filter(|r| r.outcome == outcome).count()
    }

    /// Losses as percentages of `reference` (pass `raw_initial` or `one_shot`).
    pub fn percent_of(&self, reference: f64) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| {
                if reference > 0.0 {
                    100.0 * r.after_sparsify / reference
                } else {
                    0.0
                }
            })
            .collect()
    }
}
