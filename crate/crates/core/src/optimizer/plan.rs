use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::{BrpOptions, RightSketch};
use crate::matrix::DEFAULT_EPSILON;

/// How the left projection `A₁` is drawn across iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionSchedule {
    /// Iteration `t` draws from seed `seed + (t − 1)`.
    #[default]
    Fresh,
    /// Every iteration redraws the same `A₁` from `seed`.
    Reuse,
}

/// Budget and iteration parameters for compressing one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    /// Fraction `p` of the original parameter count that remains.
    pub remaining_fraction: f64,
    pub rank: usize,
    pub preserve_fraction: f64,
    pub iterations: usize,
    pub seed: u64,
    pub power_iters: usize,
    pub epsilon: f64,
    #[serde(default)]
    pub right_sketch: RightSketch,
    #[serde(default)]
    pub projection: ProjectionSchedule,
    /// Reject low-rank updates that would increase the loss.
    #[serde(default = "yes")]
    pub safeguard: bool,
    /// Stop once three consecutive iterations improve by less than 1e-6 of
    /// the first post-sparsify loss.
    #[serde(default = "yes")]
    pub early_stop: bool,
}

fn yes() -> bool {
    true
}

impl CompressionPlan {
    pub const DEFAULT_PRESERVE: f64 = 0.01;
    pub const DEFAULT_ITERATIONS: usize = 40;
    pub const DEFAULT_POWER_ITERS: usize = 2;

    pub fn new(remaining_fraction: f64, rank: usize) -> Self {
        Self {
            remaining_fraction,
            rank,
            preserve_fraction: Self::DEFAULT_PRESERVE,
            iterations: Self::DEFAULT_ITERATIONS,
            seed: 0,
            power_iters: Self::DEFAULT_POWER_ITERS,
            epsilon: DEFAULT_EPSILON,
            right_sketch: RightSketch::GoDec,
            projection: ProjectionSchedule::Fresh,
            safeguard: true,
            early_stop: true,
        }
    }

    pub fn with_preserve(mut self, preserve_fraction: f64) -> Self {
        self.preserve_fraction = preserve_fraction;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_power_iters(mut self, power_iters: usize) -> Self {
        self.power_iters = power_iters;
        self
    }

    pub fn with_safeguard(mut self, safeguard: bool) -> Self {
        self.safeguard = safeguard;
        self
    }

    pub fn with_early_stop(mut self, early_stop: bool) -> Self {
        self.early_stop = early_stop;
        self
    }

    pub fn with_right_sketch(mut self, right_sketch: RightSketch) -> Self {
        self.right_sketch = right_sketch;
        self
    }

    pub fn with_projection(mut self, projection: ProjectionSchedule) -> Self {
        self.projection = projection;
        self
    }

    pub fn brp_options(&self) -> BrpOptions {
        BrpOptions {
            power_iters: self.power_iters,
            right_sketch: self.right_sketch,
        }
    }
}

/// Split of the remaining fraction `p` between the three components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub sparse_density: f64,
    pub lowrank_share: f64,
    pub preserve_fraction: f64,
    pub rank: usize,
}

/// Integer entry counts derived from a [`Budget`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntryCounts {
    pub preserved: usize,
    pub sparse: usize,
}

impl Budget {
    /// Whole entries available to the preserved and sparse parts, rounded
    /// down so the realized fraction never exceeds `p`.
    pub fn entry_counts(&self, rows: usize, cols: usize) -> EntryCounts {
        let total = (rows * cols) as f64;
        let p = self.sparse_density + self.lowrank_share + self.preserve_fraction;
        let lowrank = (self.rank * (rows + cols)) as f64;
        let available = (p * total - lowrank + 1e-9).floor().max(0.0) as usize;
        let preserved = ((self.preserve_fraction * total).round() as usize).min(available);
        EntryCounts {
            preserved,
            sparse: available - preserved,
        }
    }
}

/// Splits `p` into `sparse_density + r(m+n)/(mn) + preserve_fraction`.
pub fn allocate_budget(rows: usize, cols: usize, plan: &CompressionPlan) -> Result<Budget> {
    let p = plan.remaining_fraction;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InfeasiblePlan(format!(
            "remaining fraction {p} must lie in (0, 1]"
        )));
    }
    let preserve = plan.preserve_fraction;
    if !(0.0..1.0).contains(&preserve) || preserve >= p {
        return Err(Error::InfeasiblePlan(format!(
            "preserve fraction {preserve} must lie in [0, {p})"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::InfeasiblePlan(format!("empty {rows}x{cols} matrix")));
    }
    if plan.rank > rows.min(cols) {
        return Err(Error::InfeasiblePlan(format!(
            "rank {} exceeds min({rows}, {cols})",
            plan.rank
        )));
    }
    let lowrank_share = (plan.rank * (rows + cols)) as f64 / (rows * cols) as f64;
    let sparse_density = p - lowrank_share - preserve;
    if sparse_density < -1e-12 {
        return Err(Error::InfeasiblePlan(format!(
            "rank {} takes {lowrank_share:.6} of the matrix; with preserve {preserve} that exceeds remaining {p}",
            plan.rank
        )));
    }
    Ok(Budget {
        sparse_density: sparse_density.max(0.0),
        lowrank_share,
        preserve_fraction: preserve,
        rank: plan.rank,
    })
}
