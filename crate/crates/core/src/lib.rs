//! Compression of weight matrices into a sparse part plus a low-rank factor
//! pair.
//!
//! A weight matrix `W` (m×n, acting on activations `X` with n input
//! channels) is approximated as `S + U·Vᵀ`, where `S` is unstructured sparse
//! and `U·Vᵀ` has rank `r`. The decomposition minimizes the calibration
//! surrogate `‖(W − U·Vᵀ − S)·diag(‖X_j‖₂)‖_F` by alternating a salience
//! threshold step for `S` with a bilateral-random-projection fit for
//! `U·Vᵀ`.
//!
//! ```
//! use sslc::matrix::{ColumnScaling, DenseMatrix};
//! use sslc::optimizer::{compress, CompressionPlan};
//!
//! let w = DenseMatrix::from_fn(32, 24, |i, j| ((i * 31 + j * 17) as f64).sin());
//! let scaling = ColumnScaling::unit(24);
//! let plan = CompressionPlan::new(0.5, 2).with_iterations(10);
//! let layer = compress(&w, &scaling, &plan).unwrap();
//! assert!(layer.parameter_fraction() <= 0.5);
//! assert!(layer.meta.final_loss < layer.meta.trace.raw_initial);
//! ```

pub mod error;
pub mod layer;
pub mod lowrank;
pub mod matrix;
pub mod optimizer;
pub mod salience;
pub mod synthetic;

pub use error::{Error, Result};
pub use layer::{apply, CompressedLayer};
pub use optimizer::{compress, CompressionPlan};
