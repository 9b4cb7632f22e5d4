//! Rank-r approximation of (scaled) residuals.
//!
//! The working routine is a bilateral random projection ([`brp_lowrank`]);
//! [`exact_truncated_svd`] is the Eckart–Young reference it is checked
//! against.

mod brp;
mod factor;
mod svd;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{matmul_nt, matmul_tn, DenseMatrix};

pub use brp::{brp_lowrank, brp_lowrank_with, scaled_lowrank_step, BrpOptions, RightSketch};
pub use svd::{exact_truncated_svd, jacobi_svd, singular_values, Svd};

/// Orthonormal basis for the column space of `y` (same shape; collapsed
/// columns come back as zeros).
pub fn orthonormal_basis(y: &DenseMatrix) -> DenseMatrix {
    factor::orthonormalize(y)
}

/// `L = u · vᵀ` with `u: m×r`, `v: n×r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankFactors {
    u: DenseMatrix,
    v: DenseMatrix,
}

impl LowRankFactors {
    pub fn new(u: DenseMatrix, v: DenseMatrix) -> Result<Self> {
        if u.cols() != v.cols() {
            return Err(Error::DimensionMismatch {
                op: "LowRankFactors::new",
                expected: (u.rows(), u.cols()),
                found: v.shape(),
            });
        }
        Ok(Self { u, v })
    }

    pub fn zeros(rows: usize, cols: usize, rank: usize) -> Self {
        Self {
            u: DenseMatrix::zeros(rows, rank),
            v: DenseMatrix::zeros(cols, rank),
        }
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn into_parts(self) -> (DenseMatrix, DenseMatrix) {
        (self.u, self.v)
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    /// Shape `(m, n)` of the represented matrix.
    pub fn shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }

    pub fn parameter_count(&self) -> usize {
        self.rank() * (self.u.rows() + self.v.rows())
    }

    /// Dense `u · vᵀ`.
    pub fn product(&self) -> DenseMatrix {
        matmul_nt(&self.u, &self.v).expect("factor ranks agree")
    }

    /// `u · (vᵀ · x)` without forming `u · vᵀ`.
    pub fn apply(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        let vtx = matmul_tn(&self.v, x)?;
        self.u.matmul(&vtx)
    }
}
