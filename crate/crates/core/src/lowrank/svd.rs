use crate::error::{Error, Result};
use crate::matrix::{dot, DenseMatrix};

use super::LowRankFactors;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `a = u · diag(σ) · vᵀ`, singular values in descending order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DenseMatrix,
    pub singular_values: Vec<f64>,
    pub v: DenseMatrix,
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Intended for verification-scale matrices; cost is O(min(m,n)² · max(m,n))
/// per sweep.
pub fn jacobi_svd(a: &DenseMatrix) -> Svd {
    let (m, n) = a.shape();
    if m < n {
        let t = jacobi_svd(&a.transpose());
        return Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
    }
    // Columns of `a` and of the accumulated rotation, each stored as a row.
    let mut g: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a.get(i, j)).collect()).collect();
    let mut w: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let tol = 1e-15;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&g[p], &g[p]);
                let beta = dot(&g[q], &g[q]);
                let gamma = dot(&g[p], &g[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut g, p, q, c, s);
                rotate(&mut w, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma: Vec<f64> = g.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    let mut u = DenseMatrix::zeros(m, n);
    let mut v = DenseMatrix::zeros(n, n);
    let mut singular_values = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = sigma[j];
        singular_values.push(s);
        if s > 0.0 {
            for i in 0..m {
                u.set(i, k, g[j][i] / s);
            }
        }
        for i in 0..n {
            v.set(i, k, w[j][i]);
        }
    }
    Svd {
        u,
        singular_values,
        v,
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

pub fn singular_values(a: &DenseMatrix) -> Vec<f64> {
    jacobi_svd(a).singular_values
}

/// Eckart–Young optimal rank-`rank` factors; `u` carries the singular values.
pub fn exact_truncated_svd(target: &DenseMatrix, rank: usize) -> Result<LowRankFactors> {
    let (m, n) = target.shape();
    let max = m.min(n);
    if rank > max {
        return Err(Error::RankOutOfRange { rank, max });
    }
    let svd = jacobi_svd(target);
    let u = DenseMatrix::from_fn(m, rank, |i, k| svd.u.get(i, k) * svd.singular_values[k]);
    let v = DenseMatrix::from_fn(n, rank, |i, k| svd.v.get(i, k));
    Ok(LowRankFactors::new(u, v).expect("consistent shapes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_truncation_error() {
        let a = DenseMatrix::from_rows(&[[5.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 1.0]]);
        let f = exact_truncated_svd(&a, 2).unwrap();
        let err = a.sub(&f.product()).unwrap().frobenius_norm();
        assert!((err - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_out_of_range() {
        let a = DenseMatrix::zeros(3, 2);
        assert_eq!(
            exact_truncated_svd(&a, 3).unwrap_err(),
            Error::RankOutOfRange { rank: 3, max: 2 }
        );
    }

    #[test]
    fn wide_matrix_reconstructs() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0, 3.0, 4.0], [2.0, 0.5, -1.0, 0.0]]);
        let svd = jacobi_svd(&a);
        assert_eq!(svd.u.shape(), (2, 2));
        assert_eq!(svd.v.shape(), (4, 2));
        let f = exact_truncated_svd(&a, 2).unwrap();
        let err = a.sub(&f.product()).unwrap().frobenius_norm();
        assert!(err <= 1e-12 * a.frobenius_norm());
        assert!(svd.singular_values[0] >= svd.singular_values[1]);
    }
}
