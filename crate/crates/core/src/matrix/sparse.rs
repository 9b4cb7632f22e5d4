use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Boolean matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    rows: usize,
    cols: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            bits: vec![false; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: bool) -> Self {
        Self {
            rows,
            cols,
            bits: vec![value; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                bits.push(f(i, j));
            }
        }
        Self { rows, cols, bits }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j]
    }

    #[inline]
    pub fn get_flat(&self, index: usize) -> bool {
        self.bits[index]
    }

    #[inline]
    pub fn set_flat(&mut self, index: usize, value: bool) {
        self.bits[index] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "mask union",
                expected: self.shape(),
                found: other.shape(),
            });
        }
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect();
        Ok(Mask {
            rows: self.rows,
            cols: self.cols,
            bits,
        })
    }
}

/// Compressed sparse rows.
///
/// Column indices are strictly increasing within a row and no explicit zero
/// is ever stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Validates raw CSR arrays (as read from disk).
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let structure_err = |what| Error::DimensionMismatch {
            op: what,
            expected: (rows, cols),
            found: (row_offsets.len(), col_indices.len()),
        };
        if row_offsets.len() != rows + 1
            || row_offsets[0] != 0
            || row_offsets[rows] != col_indices.len()
            || col_indices.len() != values.len()
        {
            return Err(structure_err("csr offsets"));
        }
        for i in 0..rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi || hi > col_indices.len() {
                return Err(structure_err("csr offsets"));
            }
            let row = &col_indices[lo..hi];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= cols) {
                return Err(structure_err("csr column indices"));
            }
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite() || *v == 0.0) {
            return Err(Error::NonFinite {
                what: "sparse value (zero or non-finite)",
                index,
            });
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            (self.row_offsets[i]..self.row_offsets[i + 1])
                .map(move |k| (i, self.col_indices[k], self.values[k]))
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (i, j, v) in self.iter() {
            out.set(i, j, v);
        }
        out
    }

    /// Sum of two matrices whose supports are disjoint.
    pub fn merge_disjoint(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op: "merge_disjoint",
                expected: self.shape(),
                found: other.shape(),
            });
        }
        let mut row_offsets = Vec::with_capacity(self.rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        row_offsets.push(0);
        for i in 0..self.rows {
            let (mut a, a_end) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let (mut b, b_end) = (other.row_offsets[i], other.row_offsets[i + 1]);
            while a < a_end || b < b_end {
                let take_a = b >= b_end
                    || (a < a_end && self.col_indices[a] < other.col_indices[b]);
                if take_a {
                    col_indices.push(self.col_indices[a]);
                    values.push(self.values[a]);
                    a += 1;
                } else {
                    if a < a_end && self.col_indices[a] == other.col_indices[b] {
                        return Err(Error::DimensionMismatch {
                            op: "merge_disjoint (overlapping support)",
                            expected: (i, self.col_indices[a]),
                            found: (i, other.col_indices[b]),
                        });
                    }
                    col_indices.push(other.col_indices[b]);
                    values.push(other.values[b]);
                    b += 1;
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            rows: self.rows,
            cols: self.cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn matmul_dense(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        sparse_dense_matmul(self, x)
    }
}

/// Keeps `a[i][j]` wherever the mask is set. Exact zeros are not stored.
pub fn sparse_from_mask(a: &DenseMatrix, mask: &Mask) -> Result<SparseMatrix> {
    if a.shape() != mask.shape() {
        return Err(Error::DimensionMismatch {
            op: "sparse_from_mask",
            expected: a.shape(),
            found: mask.shape(),
        });
    }
    let (rows, cols) = a.shape();
    let mut row_offsets = Vec::with_capacity(rows + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for i in 0..rows {
        for (j, &v) in a.row(i).iter().enumerate() {
            if mask.get(i, j) && v != 0.0 {
                col_indices.push(j);
                values.push(v);
            }
        }
        row_offsets.push(col_indices.len());
    }
    Ok(SparseMatrix {
        rows,
        cols,
        row_offsets,
        col_indices,
        values,
    })
}

pub fn sparse_dense_matmul(s: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if s.cols != x.rows() {
        return Err(Error::DimensionMismatch {
            op: "sparse_dense_matmul",
            expected: (s.cols, x.cols()),
            found: x.shape(),
        });
    }
    let n = x.cols();
    let mut out = DenseMatrix::zeros(s.rows, n);
    for i in 0..s.rows {
        let out_row = out.row_mut(i);
        for k in s.row_offsets[i]..s.row_offsets[i + 1] {
            let v = s.values[k];
            for (o, &xv) in out_row.iter_mut().zip(x.row(s.col_indices[k])) {
                *o += v * xv;
            }
        }
    }
    Ok(out)
}
