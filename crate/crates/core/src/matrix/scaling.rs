use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Per-input-channel calibration norms, acting as the diagonal matrix
/// `diag(‖X_j‖₂)` on the right of a weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    norms: Vec<f64>,
    epsilon: f64,
}

impl ColumnScaling {
    /// Clamps every norm to at least `epsilon`. Dead channels therefore get
    /// near-zero salience while the inverse scaling stays finite.
    pub fn new(norms: Vec<f64>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidFraction(epsilon));
        }
        if let Some(index) = norms.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite {
                what: "channel norm (negative or non-finite)",
                index,
            });
        }
        let norms = norms.into_iter().map(|v| v.max(epsilon)).collect();
        Ok(Self { norms, epsilon })
    }

    pub fn unit(cols: usize) -> Self {
        Self {
            norms: vec![1.0; cols],
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn cols(&self) -> usize {
        self.norms.len()
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Channel norms of an activation matrix whose rows are input channels and
/// whose columns are calibration tokens: `norms[j] = max(‖x[j, :]‖₂, epsilon)`.
pub fn column_l2_norms(x: &DenseMatrix, epsilon: f64) -> Result<ColumnScaling> {
    let norms = (0..x.rows())
        .map(|j| x.row(j).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    ColumnScaling::new(norms, epsilon)
}

/// Multiplies column `j` by `norms[j]`, or divides when `invert` is set.
pub fn scale_columns(a: &DenseMatrix, s: &ColumnScaling, invert: bool) -> Result<DenseMatrix> {
    if a.cols() != s.cols() {
        return Err(Error::DimensionMismatch {
            op: "scale_columns",
            expected: (a.rows(), s.cols()),
            found: a.shape(),
        });
    }
    let mut data = Vec::with_capacity(a.len());
    for i in 0..a.rows() {
        for (v, n) in a.row(i).iter().zip(&s.norms) {
            data.push(if invert { v / n } else { v * n });
        }
    }
    Ok(DenseMatrix::from_raw(a.rows(), a.cols(), data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_activations_have_unit_norms() {
        let s = column_l2_norms(&DenseMatrix::identity(4), 1e-8).unwrap();
        assert_eq!(s.norms(), &[1.0; 4]);
    }

    #[test]
    fn dead_channel_is_clamped() {
        let x = DenseMatrix::from_rows(&[[1.0, 2.0], [0.0, 0.0]]);
        let s = column_l2_norms(&x, 1e-8).unwrap();
        assert_eq!(s.norms()[1], 1e-8);
    }

    #[test]
    fn norms_by_hand() {
        let x = DenseMatrix::from_rows(&[[3.0, 4.0], [0.0, 2.0]]);
        assert_eq!(column_l2_norms(&x, 1e-8).unwrap().norms(), &[5.0, 2.0]);
    }

    #[test]
    fn scaling_by_hand_and_identity() {
        let a = DenseMatrix::from_rows(&[[2.0, 3.0]]);
        let s = ColumnScaling::new(vec![10.0, 0.5], 1e-8).unwrap();
        assert_eq!(scale_columns(&a, &s, false).unwrap().data(), &[20.0, 1.5]);
        assert_eq!(scale_columns(&a, &ColumnScaling::unit(2), false).unwrap(), a);
        assert!(scale_columns(&a, &ColumnScaling::unit(3), false).is_err());
    }

    #[test]
    fn rejects_bad_norms() {
        assert!(ColumnScaling::new(vec![1.0, -1.0], 1e-8).is_err());
        assert!(ColumnScaling::new(vec![f64::NAN], 1e-8).is_err());
        assert!(ColumnScaling::new(vec![1.0], 0.0).is_err());
    }
}
