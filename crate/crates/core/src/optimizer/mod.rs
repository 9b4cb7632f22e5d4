//! Alternating sparse + low-rank optimization.
//!
//! Each matrix is handled on its own. The top `preserve_fraction` of
//! entries by salience of the original `W` is set aside first; the
//! remainder `R` is then decomposed by alternating
//!
//! ```text
//! L_t = rank-r fit of (R − S_{t−1}) in scaled space
//! S_t = top-k entries of (R − L_t) by salience, preserved positions excluded
//! ```
//!
//! and the preserved entries are merged into the final sparse part.

mod plan;
mod trace;

use std::time::Instant;

use crate::error::{Error, Result};
use crate::layer::{CompressedLayer, LayerMeta, FORMAT_VERSION};
use crate::lowrank::{scaled_lowrank_step, LowRankFactors};
use crate::matrix::{sparse_from_mask, ColumnScaling, DenseMatrix, Mask, SeededRng, SparseMatrix};
use crate::salience::{mask_top_count, mask_top_fraction, salience_of, SalienceMap};

pub use plan::{allocate_budget, Budget, CompressionPlan, EntryCounts, ProjectionSchedule};
pub use trace::{ConvergenceTrace, IterationRecord, StepOutcome};

const RETRY_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const STALL_TOLERANCE: f64 = 1e-6;
const STALL_PATIENCE: usize = 3;

/// Weights set aside before the alternating loop.
#[derive(Debug, Clone)]
pub struct Preserved {
    pub preserved: SparseMatrix,
    /// `w` with the preserved entries zeroed.
    pub remainder: DenseMatrix,
    pub exclude: Mask,
}

/// Sets aside the top `preserve_fraction` of `w` by salience.
pub fn preserve_top(
    w: &DenseMatrix,
    scaling: &ColumnScaling,
    preserve_fraction: f64,
) -> Result<Preserved> {
    if !(0.0..1.0).contains(&preserve_fraction) {
        return Err(Error::InvalidFraction(preserve_fraction));
    }
    let sal = salience_of(w, scaling)?;
    let mask = mask_top_fraction(&sal, preserve_fraction, None)?;
    split_preserved(w, mask.keep)
}

fn preserve_top_count(w: &DenseMatrix, sal: &SalienceMap, count: usize) -> Result<Preserved> {
    let mask = mask_top_count(sal, count, None)?;
    split_preserved(w, mask.keep)
}

fn split_preserved(w: &DenseMatrix, keep: Mask) -> Result<Preserved> {
    let preserved = sparse_from_mask(w, &keep)?;
    let mut remainder = w.clone();
    for (i, j, _) in preserved.iter() {
        remainder.set(i, j, 0.0);
    }
    Ok(Preserved {
        preserved,
        remainder,
        exclude: keep,
    })
}

/// `sqrt(Σ (r_ij · norms_j)²)`, accumulated in row-major order.
fn scaled_norm(residual: &DenseMatrix, scaling: &ColumnScaling) -> f64 {
    let norms = scaling.norms();
    let mut acc = 0.0;
    for i in 0..residual.rows() {
        for (r, n) in residual.row(i).iter().zip(norms) {
            let s = r.abs() * n;
            acc += s * s;
        }
    }
    acc.sqrt()
}

/// Scaled surrogate loss `‖(w − u·vᵀ − s)·diag(norms)‖_F`.
pub fn loss_of(
    w: &DenseMatrix,
    s: &SparseMatrix,
    factors: &LowRankFactors,
    scaling: &ColumnScaling,
) -> Result<f64> {
    if s.shape() != w.shape() || factors.shape() != w.shape() || scaling.cols() != w.cols() {
        return Err(Error::DimensionMismatch {
            op: "loss_of",
            expected: w.shape(),
            found: s.shape(),
        });
    }
    let mut residual = w.sub(&factors.product())?;
    for (i, j, v) in s.iter() {
        residual.set(i, j, residual.get(i, j) - v);
    }
    Ok(scaled_norm(&residual, scaling))
}

/// Sparse step: keeps `count` entries of `residual` by salience, skipping
/// excluded positions. Returns the dense sparse part, its mask, and the loss
/// of what is left.
fn sparsify(
    residual: &DenseMatrix,
    scaling: &ColumnScaling,
    count: usize,
    exclude: &Mask,
) -> Result<(DenseMatrix, Mask, f64)> {
    let sal = salience_of(residual, scaling)?;
    let mask = mask_top_count(&sal, count, Some(exclude))?.keep;
    let mut dropped = 0.0;
    let mut kept = DenseMatrix::zeros(residual.rows(), residual.cols());
    for (k, &s) in sal.values().iter().enumerate() {
        if mask.get_flat(k) {
            let (i, j) = (k / residual.cols(), k % residual.cols());
            kept.set(i, j, residual.get(i, j));
        } else {
            dropped += s;
        }
    }
    Ok((kept, mask, dropped.sqrt()))
}

fn iteration_seed(plan: &CompressionPlan, t: usize) -> u64 {
    match plan.projection {
        ProjectionSchedule::Fresh => plan.seed.wrapping_add(t as u64 - 1),
        ProjectionSchedule::Reuse => plan.seed,
    }
}

fn retry_seed(plan: &CompressionPlan, t: usize) -> u64 {
    (plan.seed ^ RETRY_SALT).wrapping_add(t as u64)
}

/// Compresses `w` into preserved + sparse + low-rank parts.
///
/// With `plan.iterations == 0` the low-rank budget is still reserved but no
/// factors are fitted: the result is the preserved weights plus a one-shot
/// salience mask at the sparse density.
pub fn compress(
    w: &DenseMatrix,
    scaling: &ColumnScaling,
    plan: &CompressionPlan,
) -> Result<CompressedLayer> {
    if w.cols() != scaling.cols() {
        return Err(Error::DimensionMismatch {
            op: "compress",
            expected: (w.rows(), scaling.cols()),
            found: w.shape(),
        });
    }
    if !w.is_finite() {
        return Err(Error::NumericalFailure { iteration: 0 });
    }
    let (m, n) = w.shape();
    let budget = allocate_budget(m, n, plan)?;
    let counts = budget.entry_counts(m, n);
    let opts = plan.brp_options();

    let initial_salience = salience_of(w, scaling)?;
    let Preserved {
        preserved,
        remainder,
        exclude,
    } = preserve_top_count(w, &initial_salience, counts.preserved)?;

    let raw_initial = scaled_norm(w, scaling);
    let start_loss = scaled_norm(&remainder, scaling);
    let (mut sparse_dense, mut sparse_mask, one_shot) =
        sparsify(&remainder, scaling, counts.sparse, &exclude)?;
    let mut trace = ConvergenceTrace {
        raw_initial,
        one_shot,
        records: Vec::with_capacity(plan.iterations),
        stopped_early_at: None,
    };

    let mut factors = LowRankFactors::zeros(m, n, plan.rank);
    let mut lowrank_dense = DenseMatrix::zeros(m, n);
    // S_0 = 0 for the first low-rank step.
    let mut prev_sparse = DenseMatrix::zeros(m, n);
    let mut prev_loss = start_loss;
    let mut stalled = 0usize;

    for t in 1..=plan.iterations {
        let started = Instant::now();
        let target = remainder.sub(&prev_sparse)?;

        let mut outcome = StepOutcome::Accepted;
        let mut chosen = fit_lowrank(&target, scaling, plan, t, false, &opts)?;
        let mut after_lowrank = residual_loss(&target, &chosen.1, scaling);
        if plan.safeguard && after_lowrank > prev_loss {
            let retry = fit_lowrank(&target, scaling, plan, t, true, &opts)?;
            let retry_loss = residual_loss(&target, &retry.1, scaling);
            if retry_loss <= prev_loss {
                chosen = retry;
                after_lowrank = retry_loss;
                outcome = StepOutcome::Retried;
            } else {
                chosen = (factors.clone(), lowrank_dense.clone());
                after_lowrank = prev_loss;
                outcome = StepOutcome::Rejected;
            }
        }
        if !after_lowrank.is_finite() {
            return Err(Error::NumericalFailure { iteration: t });
        }
        (factors, lowrank_dense) = chosen;

        let lowrank_residual = remainder.sub(&lowrank_dense)?;
        let (kept, mask, after_sparsify) =
            sparsify(&lowrank_residual, scaling, counts.sparse, &exclude)?;
        if !after_sparsify.is_finite() {
            return Err(Error::NumericalFailure { iteration: t });
        }
        sparse_dense = kept;
        sparse_mask = mask;

        let improvement = prev_loss_after_sparsify(&trace).map(|p| p - after_sparsify);
        trace.records.push(IterationRecord {
            iteration: t,
            after_lowrank,
            after_sparsify,
            outcome,
            elapsed: started.elapsed(),
        });
        prev_sparse = sparse_dense.clone();
        prev_loss = after_sparsify;

        if plan.early_stop {
            let first = trace.records[0].after_sparsify;
            match improvement {
                Some(d) if d <= STALL_TOLERANCE * first => stalled += 1,
                Some(_) => stalled = 0,
                None => {}
            }
            if stalled >= STALL_PATIENCE && t < plan.iterations {
                trace.stopped_early_at = Some(t);
                break;
            }
        }
    }

    let sparse_part = sparse_from_mask(&sparse_dense, &sparse_mask)?;
    let s = preserved.merge_disjoint(&sparse_part)?;
    let final_loss = trace.final_loss();
    Ok(CompressedLayer {
        s,
        factors,
        bias: None,
        meta: LayerMeta {
            rows: m,
            cols: n,
            plan: plan.clone(),
            budget,
            final_loss,
            trace,
            format_version: FORMAT_VERSION,
        },
    })
}

fn prev_loss_after_sparsify(trace: &ConvergenceTrace) -> Option<f64> {
    trace.records.last().map(|r| r.after_sparsify)
}

/// Low-rank candidate for iteration `t` and its dense product.
fn fit_lowrank(
    target: &DenseMatrix,
    scaling: &ColumnScaling,
    plan: &CompressionPlan,
    t: usize,
    retry: bool,
    opts: &crate::lowrank::BrpOptions,
) -> Result<(LowRankFactors, DenseMatrix)> {
    let (m, n) = target.shape();
    if plan.rank == 0 {
        return Ok((LowRankFactors::zeros(m, n, 0), DenseMatrix::zeros(m, n)));
    }
    let seed = if retry { retry_seed(plan, t) } else { iteration_seed(plan, t) };
    let mut rng = SeededRng::new(seed);
    let factors = scaled_lowrank_step(target, scaling, plan.rank, &mut rng, opts)
        .map_err(|e| match e {
            Error::NonFinite { .. } => Error::NumericalFailure { iteration: t },
            other => other,
        })?;
    let product = factors.product();
    Ok((factors, product))
}

fn residual_loss(target: &DenseMatrix, lowrank: &DenseMatrix, scaling: &ColumnScaling) -> f64 {
    match target.sub(lowrank) {
        Ok(r) => scaled_norm(&r, scaling),
        Err(_) => f64::NAN,
    }
}

/// Smallest remaining fraction at which [`compress`] with `template`'s rank
/// and settings retains at least `target` of the scaled energy
/// `‖W·D‖²_F`.
///
/// Bisects over `p` down to one-entry resolution. Only fractions actually
/// evaluated are returned, so the result always meets the target.
pub fn fraction_for_energy(
    w: &DenseMatrix,
    scaling: &ColumnScaling,
    template: &CompressionPlan,
    target: f64,
) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidFraction(target));
    }
    let (m, n) = w.shape();
    let total = (m * n) as f64;
    let fixed = (template.rank * (m + n)) as f64 / total;
    let retained = |p: f64| -> Result<f64> {
        let plan = CompressionPlan {
            remaining_fraction: p,
            ..template.clone()
        };
        Ok(compress(w, scaling, &plan)?.retained_energy())
    };
    // Entry counts above the low-rank share and the preserved weights.
    let preserved = (template.preserve_fraction * total).round();
    let lo_entries = (fixed * total + preserved).ceil() as usize + 1;
    let hi_entries = m * n;
    if lo_entries > hi_entries {
        return Err(Error::InfeasiblePlan("rank share alone exceeds the matrix".into()));
    }
    let frac = |entries: usize| (entries as f64 / total).min(1.0);
    if retained(frac(lo_entries))? >= target {
        return Ok(frac(lo_entries));
    }
    let (mut lo, mut hi) = (lo_entries, hi_entries);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if retained(frac(mid))? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(frac(hi))
}
