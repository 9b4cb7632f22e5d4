//! Calibration-aware salience and threshold masks.
//!
//! The salience of a residual entry is `(|r_ij| · ‖X_j‖₂)²`, the diagonal
//! approximation of the reconstruction-loss increase caused by zeroing it.
//! Masks select a fixed number of entries in descending salience; ties are
//! broken by row-major position, earlier positions first, so a mask depends
//! only on the ordering of the values.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::matrix::{sparse_from_mask, ColumnScaling, DenseMatrix, Mask, SparseMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SalienceMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SalienceMap {
    /// Wraps precomputed salience values. Rejects negative or non-finite input.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "SalienceMap::from_values",
                expected: (rows, cols),
                found: (values.len(), 1),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::NonFinite {
                what: "salience (negative or non-finite)",
                index,
            });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Values sorted in descending order (ties keep row-major order).
    fn sorted_desc(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneMask {
    pub keep: Mask,
    /// Smallest kept salience; `+∞` when nothing is kept.
    pub threshold: f64,
    pub kept_fraction: f64,
}

impl PruneMask {
    pub fn kept(&self) -> usize {
        self.keep.count()
    }
}

pub fn salience_of(residual: &DenseMatrix, scaling: &ColumnScaling) -> Result<SalienceMap> {
    if residual.cols() != scaling.cols() {
        return Err(Error::DimensionMismatch {
            op: "salience_of",
            expected: (residual.rows(), scaling.cols()),
            found: residual.shape(),
        });
    }
    let norms = scaling.norms();
    let mut values = Vec::with_capacity(residual.len());
    for i in 0..residual.rows() {
        for (r, n) in residual.row(i).iter().zip(norms) {
            let s = r.abs() * n;
            values.push(s * s);
        }
    }
    Ok(SalienceMap {
        rows: residual.rows(),
        cols: residual.cols(),
        values,
    })
}

/// Descending salience, then ascending flat index.
#[inline]
fn rank_order(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b].total_cmp(&values[a]).then(a.cmp(&b))
}

/// Keeps `round(fraction × eligible)` entries of highest salience.
///
/// Entries set in `exclude` are never selected and are left out of the
/// eligible count.
pub fn mask_top_fraction(
    sal: &SalienceMap,
    fraction: f64,
    exclude: Option<&Mask>,
) -> Result<PruneMask> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidFraction(fraction));
    }
    let eligible = eligible_count(sal, exclude)?;
    let count = (fraction * eligible as f64).round() as usize;
    mask_top_count(sal, count.min(eligible), exclude)
}

/// Keeps exactly `count` eligible entries of highest salience.
pub fn mask_top_count(sal: &SalienceMap, count: usize, exclude: Option<&Mask>) -> Result<PruneMask> {
    let eligible_total = eligible_count(sal, exclude)?;
    if count > eligible_total {
        return Err(Error::InvalidFraction(count as f64 / eligible_total.max(1) as f64));
    }
    let mut eligible: Vec<usize> = match exclude {
        Some(ex) => (0..sal.values.len()).filter(|&k| !ex.get_flat(k)).collect(),
        None => (0..sal.values.len()).collect(),
    };
    let mut keep = Mask::new(sal.rows, sal.cols);
    let mut threshold = f64::INFINITY;
    if count > 0 {
        let values = &sal.values;
        if count < eligible.len() {
            eligible.select_nth_unstable_by(count - 1, |&a, &b| rank_order(values, a, b));
        }
        for &k in &eligible[..count] {
            keep.set_flat(k, true);
            threshold = threshold.min(values[k]);
        }
    }
    let total = sal.rows * sal.cols;
    Ok(PruneMask {
        keep,
        threshold,
        kept_fraction: if total == 0 { 0.0 } else { count as f64 / total as f64 },
    })
}

fn eligible_count(sal: &SalienceMap, exclude: Option<&Mask>) -> Result<usize> {
    match exclude {
        None => Ok(sal.values.len()),
        Some(ex) if ex.shape() == sal.shape() => Ok(sal.values.len() - ex.count()),
        Some(ex) => Err(Error::DimensionMismatch {
            op: "mask_top_fraction exclude",
            expected: sal.shape(),
            found: ex.shape(),
        }),
    }
}

/// Standalone salience pruning: keeps the top `density` of `w` by salience.
pub fn prune(w: &DenseMatrix, scaling: &ColumnScaling, density: f64) -> Result<SparseMatrix> {
    let sal = salience_of(w, scaling)?;
    let mask = mask_top_fraction(&sal, density, None)?;
    sparse_from_mask(w, &mask.keep)
}

/// Samples the salience-retention curve at `points` evenly spaced kept
/// fractions from 0 to 1.
///
/// Each sample is `(kept_fraction, retained_salience / total_salience)`
/// where the kept entries are the highest-salience ones. An all-zero map
/// retains everything at every fraction.
pub fn retention_curve(sal: &SalienceMap, points: usize) -> Vec<(f64, f64)> {
    let points = points.max(2);
    let sorted = sal.sorted_desc();
    let n = sorted.len();
    let cumsum = cumulative(&sorted);
    let total = cumsum[n];
    (0..points)
        .map(|p| {
            let q = p as f64 / (points - 1) as f64;
            let k = (q * n as f64).round() as usize;
            let kept = if n == 0 { q } else { k as f64 / n as f64 };
            let frac = if total > 0.0 { cumsum[k] / total } else { 1.0 };
            (kept, frac.min(1.0))
        })
        .collect()
}

/// Smallest kept fraction whose top entries hold at least `target` of the
/// total salience.
pub fn fraction_for_salience(sal: &SalienceMap, target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidFraction(target));
    }
    let sorted = sal.sorted_desc();
    let n = sorted.len();
    if n == 0 {
        return Ok(0.0);
    }
    let cumsum = cumulative(&sorted);
    let total = cumsum[n];
    if total == 0.0 {
        return Ok(0.0);
    }
    let goal = target * total;
    // cumsum is non-decreasing; first index reaching the goal.
    let k = cumsum.partition_point(|&c| c < goal).min(n);
    Ok(k as f64 / n as f64)
}

fn cumulative(sorted: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(sorted.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in sorted {
        acc += v;
        out.push(acc);
    }
    out
}
