pub mod calibrate;
pub mod compress;
pub mod inspect;
pub mod report;
pub mod sweep;

use sslc::optimizer::CompressionPlan;

use crate::formats::{name_hash, RunFlags};
use crate::SolverArgs;

/// Rank used when `--rank` is absent: the 128-at-4096 operating point
/// scaled to the tensor's smaller side.
pub fn default_rank(rows: usize, cols: usize) -> usize {
    (128.0 * rows.min(cols) as f64 / 4096.0).round() as usize
}

/// Per-tensor seed, independent of compression order.
pub fn tensor_seed(global: u64, name: &str) -> u64 {
    global ^ name_hash(name)
}

/// The plan a tensor is compressed with under `flags`.
pub fn plan_for(name: &str, rows: usize, cols: usize, flags: &RunFlags) -> CompressionPlan {
    CompressionPlan {
        remaining_fraction: flags.remaining,
        rank: flags.rank.unwrap_or_else(|| default_rank(rows, cols)),
        preserve_fraction: flags.preserve,
        iterations: flags.iters,
        seed: tensor_seed(flags.seed, name),
        power_iters: flags.power_iters,
        epsilon: flags.epsilon,
        right_sketch: flags.right_sketch,
        projection: flags.projection,
        safeguard: flags.safeguard,
        early_stop: flags.early_stop,
    }
}

impl RunFlags {
    pub fn new(remaining: f64, rank: Option<usize>, preserve: f64, iters: usize, seed: u64, solver: &SolverArgs) -> Self {
        Self {
            remaining,
            rank,
            preserve,
            iters,
            seed,
            power_iters: solver.power_iters,
            epsilon: solver.epsilon,
            projection: solver.projection.into(),
            right_sketch: solver.right_sketch.into(),
            safeguard: !solver.no_safeguard,
            early_stop: !solver.no_early_stop,
        }
    }
}
