//! The compressed layer `h = (U·Vᵀ + S)·X + b` and what can be measured on
//! it: application to activations, the factor gradients of the recovery
//! objective, reconstruction error, and cost accounting.

mod cost;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowrank::LowRankFactors;
use crate::matrix::{column_l2_norms, matmul_nt, ColumnScaling, DenseMatrix, SparseMatrix};
use crate::optimizer::{loss_of, Budget, CompressionPlan, ConvergenceTrace};

pub use cost::{cost_report, CostModel, CostReport};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMeta {
    pub rows: usize,
    pub cols: usize,
    pub plan: CompressionPlan,
    pub budget: Budget,
    pub final_loss: f64,
    pub trace: ConvergenceTrace,
    pub format_version: u32,
}

/// Result of compressing one weight matrix: `W ≈ S + U·Vᵀ`.
///
/// `s` already contains the preserved weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLayer {
    pub s: SparseMatrix,
    pub factors: LowRankFactors,
    pub bias: Option<Vec<f64>>,
    pub meta: LayerMeta,
}

impl CompressedLayer {
    /// Assembles a layer from explicit parts, e.g. hand-built or loaded.
    ///
    /// The metadata records the realized budget as a zero-iteration,
    /// no-preservation plan; loss fields are zero because no reference
    /// weight is known.
    pub fn from_parts(
        s: SparseMatrix,
        factors: LowRankFactors,
        bias: Option<Vec<f64>>,
    ) -> Result<Self> {
        let (m, n) = s.shape();
        if factors.shape() != (m, n) {
            return Err(Error::DimensionMismatch {
                op: "CompressedLayer::from_parts",
                expected: (m, n),
                found: factors.shape(),
            });
        }
        if let Some(b) = &bias {
            if b.len() != m {
                return Err(Error::DimensionMismatch {
                    op: "CompressedLayer::from_parts",
                    expected: (m, 1),
                    found: (b.len(), 1),
                });
            }
        }
        let total = (m * n).max(1) as f64;
        let rank = factors.rank();
        let budget = Budget {
            sparse_density: s.nnz() as f64 / total,
            lowrank_share: factors.parameter_count() as f64 / total,
            preserve_fraction: 0.0,
            rank,
        };
        let plan = CompressionPlan::new(budget.sparse_density + budget.lowrank_share, rank)
            .with_preserve(0.0)
            .with_iterations(0);
        Ok(Self {
            s,
            factors,
            bias,
            meta: LayerMeta {
                rows: m,
                cols: n,
                plan,
                budget,
                final_loss: 0.0,
                trace: ConvergenceTrace::default(),
                format_version: FORMAT_VERSION,
            },
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.s.shape()
    }

    /// Stored parameters: sparse nonzeros plus `r(m+n)` factor entries.
    pub fn parameter_count(&self) -> usize {
        self.s.nnz() + self.factors.parameter_count()
    }

    pub fn parameter_fraction(&self) -> f64 {
        let (m, n) = self.shape();
        self.parameter_count() as f64 / (m * n) as f64
    }

    /// Share of `‖W·D‖²_F` the decomposition reproduces.
    pub fn retained_energy(&self) -> f64 {
        let raw = self.meta.trace.raw_initial;
        if raw == 0.0 {
            return 1.0;
        }
        let ratio = self.meta.final_loss / raw;
        1.0 - ratio * ratio
    }

    /// Dense `S + U·Vᵀ`.
    pub fn to_dense(&self) -> DenseMatrix {
        self.s
            .to_dense()
            .add(&self.factors.product())
            .expect("layer parts share a shape")
    }
}

fn check_layer_input(layer: &CompressedLayer, x: &DenseMatrix, op: &'static str) -> Result<()> {
    let (m, n) = layer.shape();
    if x.rows() != n {
        return Err(Error::DimensionMismatch {
            op,
            expected: (n, x.cols()),
            found: x.shape(),
        });
    }
    if let Some(b) = &layer.bias {
        if b.len() != m {
            return Err(Error::DimensionMismatch {
                op,
                expected: (m, 1),
                found: (b.len(), 1),
            });
        }
    }
    Ok(())
}

/// `S·x + U·(Vᵀ·x) + b`, never forming `U·Vᵀ`.
pub fn apply(layer: &CompressedLayer, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_layer_input(layer, x, "apply")?;
    let mut out = layer.s.matmul_dense(x)?.add(&layer.factors.apply(x)?)?;
    if let Some(bias) = &layer.bias {
        for (i, b) in bias.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|v| *v += b);
        }
    }
    Ok(out)
}

/// `E = (U·Vᵀ + S − W_ref)` and `G = E·X·Xᵀ`.
fn recovery_terms(
    layer: &CompressedLayer,
    w_ref: &DenseMatrix,
    x: &DenseMatrix,
) -> Result<(DenseMatrix, DenseMatrix)> {
    if w_ref.shape() != layer.shape() {
        return Err(Error::DimensionMismatch {
            op: "recovery objective",
            expected: layer.shape(),
            found: w_ref.shape(),
        });
    }
    check_layer_input(layer, x, "recovery objective")?;
    let error = layer.to_dense().sub(w_ref)?;
    let ex = error.matmul(x)?;
    Ok((ex.clone(), matmul_nt(&ex, x)?))
}

/// `f(U, V) = ‖(U·Vᵀ + S − W_ref)·X‖²_F`, the objective fine-tuning
/// minimizes over the factors with `S` frozen.
pub fn recovery_objective(
    layer: &CompressedLayer,
    w_ref: &DenseMatrix,
    x: &DenseMatrix,
) -> Result<f64> {
    let (ex, _) = recovery_terms(layer, w_ref, x)?;
    Ok(ex.data().iter().map(|v| v * v).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorGradients {
    pub grad_u: DenseMatrix,
    pub grad_v: DenseMatrix,
}

/// Analytic gradients of [`recovery_objective`]:
/// `∂f/∂U = 2·G·V` and `∂f/∂V = 2·Gᵀ·U` with `G = (U·Vᵀ + S − W_ref)·X·Xᵀ`.
pub fn factor_gradients(
    layer: &CompressedLayer,
    w_ref: &DenseMatrix,
    x: &DenseMatrix,
) -> Result<FactorGradients> {
    let (_, g) = recovery_terms(layer, w_ref, x)?;
    let grad_u = g.matmul(layer.factors.v())?.scale(2.0);
    let grad_v = crate::matrix::matmul_tn(&g, layer.factors.u())?.scale(2.0);
    Ok(FactorGradients { grad_u, grad_v })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    /// `‖(W − U·Vᵀ − S)·X_eval‖_F` with real activations.
    pub frobenius_error: f64,
    /// `frobenius_error / ‖W·X_eval‖_F`.
    pub relative_error: f64,
    /// Diagonal surrogate with norms taken from `X_eval`.
    pub surrogate_loss: f64,
}

pub fn reconstruction_report(
    layer: &CompressedLayer,
    w: &DenseMatrix,
    x_eval: &DenseMatrix,
) -> Result<ReconstructionReport> {
    if w.shape() != layer.shape() {
        return Err(Error::DimensionMismatch {
            op: "reconstruction_report",
            expected: layer.shape(),
            found: w.shape(),
        });
    }
    check_layer_input(layer, x_eval, "reconstruction_report")?;
    let residual = w.sub(&layer.to_dense())?;
    let frobenius_error = residual.matmul(x_eval)?.frobenius_norm();
    let reference = w.matmul(x_eval)?.frobenius_norm();
    let relative_error = if reference > 0.0 {
        frobenius_error / reference
    } else {
        0.0
    };
    let scaling: ColumnScaling = column_l2_norms(x_eval, crate::matrix::DEFAULT_EPSILON)?;
    let surrogate_loss = loss_of(w, &layer.s, &layer.factors, &scaling)?;
    Ok(ReconstructionReport {
        frobenius_error,
        relative_error,
        surrogate_loss,
    })
}
