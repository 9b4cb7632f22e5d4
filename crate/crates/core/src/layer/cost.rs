use serde::{Deserialize, Serialize};

use super::CompressedLayer;
use crate::error::{Error, Result};

/// Unit-cost MAC accounting for one matrix-vector product.
///
/// Sparse kernels on real hardware pay per-nonzero overhead (indexing,
/// load imbalance); `overhead_factor` scales the nonzero count and is meant
/// to be calibrated per backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub overhead_factor: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            overhead_factor: 1.0,
        }
    }
}

impl CostModel {
    pub fn dense_cost(&self, rows: usize, cols: usize) -> f64 {
        (rows * cols) as f64
    }

    pub fn sparse_cost(&self, nnz: usize) -> f64 {
        nnz as f64 * self.overhead_factor
    }

    pub fn lowrank_cost(&self, rows: usize, cols: usize, rank: usize) -> f64 {
        (rank * (rows + cols)) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub dense: f64,
    pub sparse: f64,
    pub lowrank: f64,
    pub sum: f64,
    pub speedup: f64,
}

impl CostReport {
    /// Builds a report from externally measured costs (e.g. simulator cycles).
    pub fn from_costs(dense: f64, sparse: f64, lowrank: f64) -> Result<Self> {
        let sum = sparse + lowrank;
        if !(sum > 0.0) || !dense.is_finite() || !sum.is_finite() {
            return Err(Error::EmptyCost);
        }
        Ok(Self {
            dense,
            sparse,
            lowrank,
            sum,
            speedup: dense / sum,
        })
    }

    /// Speedup rounded half away from zero to two decimals.
    pub fn speedup_2dp(&self) -> f64 {
        (self.speedup * 100.0).round() / 100.0
    }

    /// `"1.85×"` style label.
    pub fn speedup_label(&self) -> String {
        format!("{:.2}×", self.speedup_2dp())
    }
}

pub fn cost_report(layer: &CompressedLayer, model: &CostModel) -> Result<CostReport> {
    let (m, n) = layer.shape();
    CostReport::from_costs(
        model.dense_cost(m, n),
        model.sparse_cost(layer.s.nnz()),
        model.lowrank_cost(m, n, layer.factors.rank()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_and_ratio() {
        let r = CostReport::from_costs(49728.0, 24764.5, 2112.0).unwrap();
        assert!((r.sum - 26876.5).abs() < 1e-9);
        assert_eq!(r.speedup_label(), "1.85×");
    }

    #[test]
    fn empty_layer_rejected() {
        assert_eq!(CostReport::from_costs(100.0, 0.0, 0.0), Err(Error::EmptyCost));
    }

    #[test]
    fn unit_model() {
        let m = CostModel::default();
        assert_eq!(m.lowrank_cost(4096, 4096, 128), 128.0 * 8192.0);
        assert_eq!(m.dense_cost(3, 5), 15.0);
        assert_eq!(CostModel { overhead_factor: 2.0 }.sparse_cost(10), 20.0);
    }
}
