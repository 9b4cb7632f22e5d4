//! Small dense kernels used by the randomized projection: column
//! orthonormalization and a completely pivoted LU solve for the r×r core.

use crate::matrix::{dot, DenseMatrix};

/// Orthonormal basis of the column space of `y`, same shape as `y`.
///
/// Modified Gram–Schmidt with one reorthogonalization pass. Columns that
/// collapse numerically become zero columns rather than noise.
pub(crate) fn orthonormalize(y: &DenseMatrix) -> DenseMatrix {
    let (m, r) = y.shape();
    let mut cols: Vec<Vec<f64>> = (0..r).map(|j| (0..m).map(|i| y.get(i, j)).collect()).collect();
    for j in 0..r {
        let original = dot(&cols[j], &cols[j]).sqrt();
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        for _ in 0..2 {
            for q in done.iter() {
                let proj = dot(q, col);
                for (c, qv) in col.iter_mut().zip(q) {
                    *c -= proj * qv;
                }
            }
        }
        let norm = dot(col, col).sqrt();
        if norm <= 1e-13 * original || norm == 0.0 {
            col.iter_mut().for_each(|c| *c = 0.0);
        } else {
            col.iter_mut().for_each(|c| *c /= norm);
        }
    }
    DenseMatrix::from_fn(m, r, |i, j| cols[j][i])
}

/// LU factorization with complete pivoting, `P·A·Q = L·U`.
pub(crate) struct PivotedLu {
    n: usize,
    lu: Vec<f64>,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
}

impl PivotedLu {
    /// Returns the factorization and the pivot-ratio condition estimate
    /// `max|pivot| / min|pivot|` (infinite for an exactly singular matrix).
    pub(crate) fn factor(a: &DenseMatrix) -> (Self, f64) {
        let n = a.rows();
        debug_assert_eq!(n, a.cols());
        let mut lu = a.data().to_vec();
        let mut row_perm: Vec<usize> = (0..n).collect();
        let mut col_perm: Vec<usize> = (0..n).collect();
        let (mut max_pivot, mut min_pivot) = (0.0f64, f64::INFINITY);
        for k in 0..n {
            let (mut pi, mut pj, mut best) = (k, k, -1.0);
            for i in k..n {
                for j in k..n {
                    let v = lu[i * n + j].abs();
                    if v > best {
                        best = v;
                        pi = i;
                        pj = j;
                    }
                }
            }
            if pi != k {
                for j in 0..n {
                    lu.swap(k * n + j, pi * n + j);
                }
                row_perm.swap(k, pi);
            }
            if pj != k {
                for i in 0..n {
                    lu.swap(i * n + k, i * n + pj);
                }
                col_perm.swap(k, pj);
            }
            let pivot = lu[k * n + k];
            max_pivot = max_pivot.max(pivot.abs());
            min_pivot = min_pivot.min(pivot.abs());
            if pivot == 0.0 {
                continue;
            }
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= f * lu[k * n + j];
                    }
                }
            }
        }
        let cond = if n == 0 {
            1.0
        } else if min_pivot == 0.0 {
            f64::INFINITY
        } else {
            max_pivot / min_pivot
        };
        (
            Self {
                n,
                lu,
                row_perm,
                col_perm,
            },
            cond,
        )
    }

    /// Solves `A·x = b` in place of `b`.
    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = self.row_perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * y[j];
            }
            y[i] = acc / self.lu[i * n + i];
        }
        let mut x = vec![0.0; n];
        for (k, &c) in self.col_perm.iter().enumerate() {
            x[c] = y[k];
        }
        x
    }
}
