//! Dense and sparse primitives.
//!
//! All reductions run in a fixed loop order so that results are
//! bit-reproducible for a given input.

mod dense;
mod rng;
mod scaling;
mod sparse;

pub use dense::{frobenius_norm, matmul, matmul_nt, matmul_tn, DenseMatrix};
pub(crate) use dense::dot;
pub use rng::SeededRng;
pub use scaling::{column_l2_norms, scale_columns, ColumnScaling, DEFAULT_EPSILON};
pub use sparse::{sparse_dense_matmul, sparse_from_mask, Mask, SparseMatrix};
