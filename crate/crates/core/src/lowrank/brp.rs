use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{matmul_tn, ColumnScaling, DenseMatrix, SeededRng};

use super::factor::{orthonormalize, PivotedLu};
use super::LowRankFactors;

const CONDITION_LIMIT: f64 = 1e12;
const RIDGE_SCALE: f64 = 1e-10;

/// Which right sketch `A₂` the projection uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RightSketch {
    /// `A₂ = Y₁`, the GoDec convention. `L′` is then the orthogonal
    /// projection of the target onto `range(Y₁)`.
    #[default]
    GoDec,
    /// An independent `m×r` Gaussian; `L′` becomes an oblique projection.
    IndependentGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrpOptions {
    pub power_iters: usize,
    pub right_sketch: RightSketch,
}

impl Default for BrpOptions {
    fn default() -> Self {
        Self {
            power_iters: 2,
            right_sketch: RightSketch::GoDec,
        }
    }
}

pub fn brp_lowrank(
    target: &DenseMatrix,
    rank: usize,
    rng: &mut SeededRng,
    power_iters: usize,
) -> Result<LowRankFactors> {
    let opts = BrpOptions {
        power_iters,
        ..BrpOptions::default()
    };
    brp_lowrank_with(target, rank, rng, &opts)
}

/// Bilateral random projection `L′ = Y₁ (A₂ᵀY₁)⁻¹ Y₂ᵀ`.
///
/// `Y₁ = L̃A₁` with an `n×r` Gaussian `A₁`, refined by `power_iters` passes
/// of `Y₁ ← L̃ orth(L̃ᵀ orth(Y₁))`. Then `Y₂ = L̃ᵀA₂`. The factors are stored
/// as `u = Y₁(A₂ᵀY₁)⁻¹` and `v = Y₂`.
///
/// The r×r core is solved by completely pivoted LU. If its pivot-ratio
/// condition estimate exceeds 1e12 the solve is retried once with a ridge of
/// `1e-10 · mean|diag|`; a core that is still singular is an error.
pub fn brp_lowrank_with(
    target: &DenseMatrix,
    rank: usize,
    rng: &mut SeededRng,
    opts: &BrpOptions,
) -> Result<LowRankFactors> {
    let (m, n) = target.shape();
    let max = m.min(n);
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    if let Some(index) = target.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "low-rank target",
            index,
        });
    }
    if target.data().iter().all(|&v| v == 0.0) {
        return Ok(LowRankFactors::zeros(m, n, rank));
    }

    let a1 = rng.gaussian_matrix(n, rank);
    let mut y1 = target.matmul(&a1)?;
    for _ in 0..opts.power_iters {
        let q = orthonormalize(&y1);
        let z = orthonormalize(&matmul_tn(target, &q)?);
        y1 = target.matmul(&z)?;
    }

    let (y2, core) = match opts.right_sketch {
        RightSketch::GoDec => (matmul_tn(target, &y1)?, matmul_tn(&y1, &y1)?),
        RightSketch::IndependentGaussian => {
            let a2 = rng.gaussian_matrix(m, rank);
            (matmul_tn(target, &a2)?, matmul_tn(&a2, &y1)?)
        }
    };

    let u = solve_right(&y1, &core)?;
    LowRankFactors::new(u, y2)
}

/// `y · core⁻¹`, through `coreᵀ · uᵀ = yᵀ`.
fn solve_right(y: &DenseMatrix, core: &DenseMatrix) -> Result<DenseMatrix> {
    let r = core.rows();
    let core_t = core.transpose();
    let (mut lu, mut cond) = PivotedLu::factor(&core_t);
    if !(cond <= CONDITION_LIMIT) {
        let mean_diag = (0..r).map(|i| core.get(i, i).abs()).sum::<f64>() / r as f64;
        let ridge = RIDGE_SCALE * mean_diag;
        if ridge > 0.0 && ridge.is_finite() {
            let mut regularized = core_t.clone();
            for i in 0..r {
                regularized.set(i, i, regularized.get(i, i) + ridge);
            }
            (lu, cond) = PivotedLu::factor(&regularized);
        }
        if !(cond <= CONDITION_LIMIT) {
            return Err(Error::SingularProjection {
                rank: r,
                condition: cond,
            });
        }
    }
    let mut data = Vec::with_capacity(y.len());
    for i in 0..y.rows() {
        data.extend(lu.solve(y.row(i)));
    }
    DenseMatrix::from_vec(y.rows(), r, data).map_err(|_| Error::SingularProjection {
        rank: r,
        condition: cond,
    })
}

/// Rank-r step in calibration-scaled space.
///
/// Runs the projection on `residual · diag(norms)` and folds the inverse
/// scaling into `v` (row `j` divided by `norms[j]`), so the returned product
/// approximates `residual` while minimizing the scaled error.
pub fn scaled_lowrank_step(
    residual: &DenseMatrix,
    scaling: &ColumnScaling,
    rank: usize,
    rng: &mut SeededRng,
    opts: &BrpOptions,
) -> Result<LowRankFactors> {
    let scaled = crate::matrix::scale_columns(residual, scaling, false)?;
    let factors = brp_lowrank_with(&scaled, rank, rng, opts)?;
    let (u, v) = factors.into_parts();
    let v = crate::matrix::scale_columns(&v.transpose(), scaling, true)?.transpose();
    LowRankFactors::new(u, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_range_is_checked() {
        let t = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let mut rng = SeededRng::new(0);
        assert!(matches!(
            brp_lowrank(&t, 0, &mut rng, 2),
            Err(Error::RankOutOfRange { .. })
        ));
        assert!(matches!(
            brp_lowrank(&t, 3, &mut rng, 2),
            Err(Error::RankOutOfRange { rank: 3, max: 2 })
        ));
    }

    #[test]
    fn zero_target_gives_zero_factors() {
        let t = DenseMatrix::zeros(5, 4);
        let f = brp_lowrank(&t, 2, &mut SeededRng::new(1), 2).unwrap();
        assert_eq!(f.product(), t);
    }

    #[test]
    fn rank_one_target_is_exact() {
        let a = [1.0, -2.0, 0.5, 3.0];
        let b = [2.0, 1.0, -1.0];
        let t = DenseMatrix::from_fn(4, 3, |i, j| a[i] * b[j]);
        for q in [0, 2] {
            let f = brp_lowrank(&t, 1, &mut SeededRng::new(7), q).unwrap();
            let err = t.sub(&f.product()).unwrap().frobenius_norm();
            assert!(err <= 1e-8 * t.frobenius_norm(), "q={q} err={err}");
        }
    }

    #[test]
    fn rank_deficient_target_survives_ridge() {
        let a = [1.0, -2.0, 0.5, 3.0, 1.0];
        let b = [2.0, 1.0, -1.0, 0.25];
        let t = DenseMatrix::from_fn(5, 4, |i, j| a[i] * b[j]);
        let f = brp_lowrank(&t, 3, &mut SeededRng::new(3), 2).unwrap();
        let err = t.sub(&f.product()).unwrap().frobenius_norm();
        assert!(err <= 1e-6 * t.frobenius_norm(), "err={err}");
    }

    #[test]
    fn independent_sketch_recovers_exact_rank() {
        let t = DenseMatrix::from_fn(6, 5, |i, j| (i as f64 + 1.0) * (j as f64 - 2.0) + (i * j) as f64);
        let opts = BrpOptions {
            power_iters: 1,
            right_sketch: RightSketch::IndependentGaussian,
        };
        let f = brp_lowrank_with(&t, 2, &mut SeededRng::new(5), &opts).unwrap();
        let err = t.sub(&f.product()).unwrap().frobenius_norm();
        assert!(err <= 1e-8 * t.frobenius_norm(), "err={err}");
    }

    #[test]
    fn non_finite_target_rejected() {
        let t = DenseMatrix::from_rows(&[[1.0, 1.0], [1.0, 2.0]])
            .map(|v| if v > 1.5 { f64::INFINITY } else { v });
        assert!(matches!(
            brp_lowrank(&t, 1, &mut SeededRng::new(0), 0),
            Err(Error::NonFinite { index: 3, .. })
        ));
    }
}
