use nalgebra::DMatrix;
use proptest::prelude::*;
use sslc::lowrank::{
    brp_lowrank, exact_truncated_svd, scaled_lowrank_step, singular_values, BrpOptions,
    LowRankFactors,
};
use sslc::matrix::{scale_columns, ColumnScaling, DenseMatrix, SeededRng, DEFAULT_EPSILON};
use sslc::synthetic::geometric_spectrum;

fn to_nalgebra(a: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.data())
}

/// Singular values from an independent implementation, descending.
fn oracle_singular_values(a: &DenseMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_nalgebra(a).singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap());
    s
}

/// Eckart–Young: the best rank-r error is the tail of the spectrum.
fn oracle_tail_error(a: &DenseMatrix, rank: usize) -> f64 {
    oracle_singular_values(a)[rank..]
        .iter()
        .map(|s| s * s)
        .sum::<f64>()
        .sqrt()
}

fn error_of(target: &DenseMatrix, f: &LowRankFactors) -> f64 {
    target.sub(&f.product()).unwrap().frobenius_norm()
}

#[test]
fn jacobi_spectrum_matches_nalgebra() {
    let a = SeededRng::new(4).gaussian_matrix(20, 30);
    let ours = singular_values(&a);
    let theirs = oracle_singular_values(&a);
    for (x, y) in ours.iter().zip(&theirs) {
        assert!((x - y).abs() <= 1e-10 * theirs[0], "{x} vs {y}");
    }
}

#[test]
fn truncated_svd_hits_the_eckart_young_error() {
    let a = SeededRng::new(8).gaussian_matrix(20, 30);
    let f = exact_truncated_svd(&a, 5).unwrap();
    let want = oracle_tail_error(&a, 5);
    assert!((error_of(&a, &f) - want).abs() <= 1e-10 * want);
    assert_eq!(f.rank(), 5);
}

#[test]
fn truncated_svd_at_full_rank_reconstructs() {
    let a = SeededRng::new(1).gaussian_matrix(6, 4);
    let f = exact_truncated_svd(&a, 4).unwrap();
    assert!(error_of(&a, &f) <= 1e-12 * a.frobenius_norm());
}

#[test]
fn brp_stays_within_its_error_bound() {
    // Post-condition slack at two power passes: 1.5× the optimal error.
    for (m, n, ratio) in [(64, 48, 0.9), (64, 64, 0.8), (96, 128, 0.8)] {
        let t = geometric_spectrum(m, n, 10.0, ratio, 3);
        for r in [4, 8, 16] {
            let best = oracle_tail_error(&t, r);
            for seed in 0..5 {
                let e = error_of(&t, &brp_lowrank(&t, r, &mut SeededRng::new(seed), 2).unwrap());
                assert!(e <= 1.5 * best, "{m}x{n} r={r} seed={seed}: {e} vs {best}");
                assert!(e >= best * (1.0 - 1e-12));
            }
        }
    }
}

#[test]
fn more_power_passes_never_hurt() {
    for seed in 0..4 {
        let t = geometric_spectrum(64, 48, 10.0, 0.85, 10 + seed);
        let errors: Vec<f64> = (0..6)
            .map(|q| error_of(&t, &brp_lowrank(&t, 6, &mut SeededRng::new(seed), q).unwrap()))
            .collect();
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{errors:?}");
        }
    }
}

#[test]
fn scaled_step_minimizes_the_scaled_error() {
    let mut rng = SeededRng::new(17);
    let r = rng.gaussian_matrix(32, 32);
    let norms: Vec<f64> = (0..32).map(|_| 10f64.powf(-1.0 + 2.0 * rng.uniform())).collect();
    let scaling = ColumnScaling::new(norms, DEFAULT_EPSILON).unwrap();
    let scaled = scale_columns(&r, &scaling, false).unwrap();
    let best = oracle_tail_error(&scaled, 4);
    let scaled_error = |f: &LowRankFactors| {
        scale_columns(&r.sub(&f.product()).unwrap(), &scaling, false)
            .unwrap()
            .frobenius_norm()
    };

    for seed in 0..5 {
        let f = scaled_lowrank_step(&r, &scaling, 4, &mut SeededRng::new(seed), &BrpOptions::default()).unwrap();
        let e = scaled_error(&f);
        assert!(e >= best * (1.0 - 1e-12) && e <= 1.5 * best, "seed {seed}: {e} vs {best}");
    }

    // With enough passes the step reaches the scaled optimum, which the
    // unscaled optimum does not.
    let opts = BrpOptions { power_iters: 10, ..BrpOptions::default() };
    let f = scaled_lowrank_step(&r, &scaling, 4, &mut SeededRng::new(0), &opts).unwrap();
    assert!(scaled_error(&f) <= 1.001 * best);
    let unscaled = exact_truncated_svd(&r, 4).unwrap();
    assert!(scaled_error(&unscaled) > 1.01 * best);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn brp_is_deterministic_and_rank_bounded(
        data in prop::collection::vec(-5.0f64..5.0, 12 * 9),
        rank in 1usize..=9,
        seed in any::<u64>(),
    ) {
        let t = DenseMatrix::from_vec(12, 9, data).unwrap();
        let a = brp_lowrank(&t, rank, &mut SeededRng::new(seed), 2).unwrap();
        let b = brp_lowrank(&t, rank, &mut SeededRng::new(seed), 2).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.rank(), rank);
        let s = oracle_singular_values(&a.product());
        for tail in &s[rank..] {
            prop_assert!(*tail <= 1e-8 * s[0].max(1.0));
        }
        prop_assert!(error_of(&t, &a) >= oracle_tail_error(&t, rank) * (1.0 - 1e-9));
    }
}
