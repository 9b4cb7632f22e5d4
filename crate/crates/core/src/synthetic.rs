//! Seeded test instances: planted sparse + low-rank matrices, matrices with
//! a prescribed spectrum, and heavy-tailed calibration norms.

use crate::lowrank::LowRankFactors;
use crate::matrix::{matmul_nt, ColumnScaling, DenseMatrix, SeededRng, DEFAULT_EPSILON};

/// Parameters of a planted `low-rank + spikes + noise` matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Planted {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    /// Fraction of entries carrying a spike.
    pub spike_density: f64,
    /// Spike magnitude relative to the RMS of the low-rank part.
    pub spike_scale: f64,
    /// Noise standard deviation relative to the RMS of the low-rank part.
    pub noise: f64,
}

impl Planted {
    pub fn new(rows: usize, cols: usize, rank: usize) -> Self {
        Self {
            rows,
            cols,
            rank,
            spike_density: 0.05,
            spike_scale: 4.0,
            noise: 0.01,
        }
    }

    pub fn generate(&self, seed: u64) -> DenseMatrix {
        let mut rng = SeededRng::new(seed);
        let u = rng.gaussian_matrix(self.rows, self.rank);
        let v = rng.gaussian_matrix(self.cols, self.rank);
        let lowrank = matmul_nt(&u, &v).expect("shared rank");
        let rms = (self.rank as f64).sqrt().max(1.0);
        let mut w = lowrank;
        for i in 0..self.rows {
            for j in 0..self.cols {
                let mut x = w.get(i, j) + self.noise * rms * rng.gaussian();
                if rng.uniform() < self.spike_density {
                    let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                    x += sign * self.spike_scale * rms * (1.0 + rng.uniform());
                }
                w.set(i, j, x);
            }
        }
        w
    }
}

/// Random Haar-like orthonormal `rows×cols` basis (`rows ≥ cols`).
fn random_orthonormal(rows: usize, cols: usize, rng: &mut SeededRng) -> DenseMatrix {
    crate::lowrank::orthonormal_basis(&rng.gaussian_matrix(rows, cols))
}

/// `U·diag(σ)·Vᵀ` with random orthonormal `U`, `V` and the given singular
/// values (at most `min(rows, cols)` of them).
pub fn with_spectrum(rows: usize, cols: usize, sigma: &[f64], seed: u64) -> DenseMatrix {
    let k = sigma.len();
    assert!(k <= rows.min(cols), "too many singular values");
    let mut rng = SeededRng::new(seed);
    let u = random_orthonormal(rows, k, &mut rng);
    let v = random_orthonormal(cols, k, &mut rng);
    let us = DenseMatrix::from_fn(rows, k, |i, j| u.get(i, j) * sigma[j]);
    LowRankFactors::new(us, v).expect("shared rank").product()
}

/// `σ_k = leading · ratio^k` for `k < min(rows, cols)`.
pub fn geometric_spectrum(rows: usize, cols: usize, leading: f64, ratio: f64, seed: u64) -> DenseMatrix {
    let sigma: Vec<f64> = (0..rows.min(cols))
        .map(|k| leading * ratio.powi(k as i32))
        .collect();
    with_spectrum(rows, cols, &sigma, seed)
}

/// Channel norms `exp(σ·z_j)` with standard normal `z_j`.
pub fn lognormal_norms(cols: usize, sigma: f64, seed: u64) -> ColumnScaling {
    let mut rng = SeededRng::new(seed);
    let norms = (0..cols).map(|_| (sigma * rng.gaussian()).exp()).collect();
    ColumnScaling::new(norms, DEFAULT_EPSILON).expect("positive norms")
}

/// Gaussian weights whose salience is heavy-tailed: entries are
/// `sign · exp(σ·z)` magnitudes.
pub fn lognormal_weights(rows: usize, cols: usize, sigma: f64, seed: u64) -> DenseMatrix {
    let mut rng = SeededRng::new(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| {
        let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
        sign * (sigma * rng.gaussian()).exp()
    })
}

/// Weights and calibration norms whose salience `(|w|·norm)²` is
/// approximately lognormal with log-scale spread `sigma`.
///
/// `W` is a sum of `rank` signed outer products of lognormal vectors plus a
/// small iid Gaussian part (`noise` relative to the typical entry), and the
/// norms are lognormal as well. Row factors, column factors and norms each
/// carry a third of the log-variance.
pub fn lognormal_salience(
    rows: usize,
    cols: usize,
    rank: usize,
    sigma: f64,
    noise: f64,
    seed: u64,
) -> (DenseMatrix, ColumnScaling) {
    let mut rng = SeededRng::new(seed);
    let part = sigma / (2.0 * 3f64.sqrt());
    let factor = |len: usize, rng: &mut SeededRng| -> DenseMatrix {
        DenseMatrix::from_fn(len, rank, |_, _| {
            let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            sign * (part * rng.gaussian()).exp()
        })
    };
    let u = factor(rows, &mut rng);
    let v = factor(cols, &mut rng);
    let signal = matmul_nt(&u, &v).expect("shared rank");
    let typical = (rank as f64).sqrt();
    let w = DenseMatrix::from_fn(rows, cols, |i, j| {
        signal.get(i, j) + noise * typical * rng.gaussian()
    });
    let norms = (0..cols).map(|_| (part * rng.gaussian()).exp()).collect();
    let scaling = ColumnScaling::new(norms, DEFAULT_EPSILON).expect("positive norms");
    (w, scaling)
}
