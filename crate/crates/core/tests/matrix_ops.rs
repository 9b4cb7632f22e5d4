use proptest::prelude::*;
use sslc::matrix::{
    column_l2_norms, scale_columns, sparse_dense_matmul, sparse_from_mask, ColumnScaling,
    DenseMatrix, Mask, SeededRng, SparseMatrix, DEFAULT_EPSILON,
};

fn triple_loop(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum()
    })
}

fn max_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-10.0f64..10.0, rows * cols)
        .prop_map(move |v| DenseMatrix::from_vec(rows, cols, v).unwrap())
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = SeededRng::new(11);
    let a = rng.gaussian_matrix(7, 5);
    let b = rng.gaussian_matrix(5, 3);
    assert!(max_diff(&a.matmul(&b).unwrap(), &triple_loop(&a, &b)) < 1e-12);
}

#[test]
fn frobenius_matches_scalar_loop() {
    let a = SeededRng::new(5).gaussian_matrix(6, 6);
    let mut acc = 0.0;
    for i in 0..6 {
        for j in 0..6 {
            acc += a.get(i, j) * a.get(i, j);
        }
    }
    assert!((a.frobenius_norm() - acc.sqrt()).abs() < 1e-12);
    assert_eq!(DenseMatrix::zeros(4, 4).frobenius_norm(), 0.0);
}

#[test]
fn channel_norms_of_small_activations() {
    let x = DenseMatrix::from_rows(&[[3.0, 4.0], [0.0, 2.0]]);
    assert_eq!(column_l2_norms(&x, DEFAULT_EPSILON).unwrap().norms(), &[5.0, 2.0]);
    let dead = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
    assert_eq!(column_l2_norms(&dead, 1e-8).unwrap().norms(), &[1.0, 1e-8]);
    let eye = column_l2_norms(&DenseMatrix::identity(4), 1e-8).unwrap();
    assert_eq!(eye.norms(), &[1.0; 4]);
}

#[test]
fn mask_round_trip_is_exact() {
    let mut rng = SeededRng::new(3);
    let a = rng.gaussian_matrix(8, 8);
    let mask = Mask::from_fn(8, 8, |_, _| rng.uniform() < 0.5);
    let s = sparse_from_mask(&a, &mask).unwrap();
    let oracle = DenseMatrix::from_fn(8, 8, |i, j| if mask.get(i, j) { a.get(i, j) } else { 0.0 });
    assert_eq!(s.to_dense(), oracle);
    assert_eq!(s.nnz(), mask.count());

    let none = sparse_from_mask(&a, &Mask::new(8, 8)).unwrap();
    assert_eq!(none.nnz(), 0);
}

#[test]
fn sparse_product_matches_dense_oracle() {
    let mut rng = SeededRng::new(9);
    let a = rng.gaussian_matrix(10, 10);
    let mask = Mask::from_fn(10, 10, |_, _| rng.uniform() < 0.5);
    let s = sparse_from_mask(&a, &mask).unwrap();
    let x = rng.gaussian_matrix(10, 4);
    let got = sparse_dense_matmul(&s, &x).unwrap();
    let want = triple_loop(&s.to_dense(), &x);
    assert!(max_diff(&got, &want) <= 1e-10 * want.max_abs().max(1.0));

    assert_eq!(
        sparse_dense_matmul(&SparseMatrix::empty(10, 10), &x).unwrap(),
        DenseMatrix::zeros(10, 4)
    );
    assert_eq!(sparse_dense_matmul(&SparseMatrix::identity(10), &x).unwrap(), x);
}

#[test]
fn csr_invariants_hold_after_masking() {
    let a = DenseMatrix::from_rows(&[[0.0, 1.0, 2.0], [3.0, 0.0, 0.0]]);
    let s = sparse_from_mask(&a, &Mask::filled(2, 3, true)).unwrap();
    assert_eq!(s.row_offsets(), &[0, 2, 3]);
    assert_eq!(s.col_indices(), &[1, 2, 0]);
    assert!(s.values().iter().all(|&v| v != 0.0));
}

#[test]
fn rng_stream_is_reproducible() {
    let a = SeededRng::new(42).gaussian_matrix(3, 4);
    let b = SeededRng::new(42).gaussian_matrix(3, 4);
    assert_eq!(a, b);
    assert_ne!(a, SeededRng::new(43).gaussian_matrix(3, 4));
}

proptest! {
    #[test]
    fn matmul_is_associative(a in matrix(4, 3), b in matrix(3, 5), c in matrix(5, 2)) {
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        let scale = left.max_abs().max(1.0);
        prop_assert!(max_diff(&left, &right) <= 1e-9 * scale);
    }

    #[test]
    fn scaling_round_trips(
        a in matrix(5, 4),
        norms in prop::collection::vec(1e-3f64..1e3, 4),
    ) {
        let s = ColumnScaling::new(norms, DEFAULT_EPSILON).unwrap();
        let back = scale_columns(&scale_columns(&a, &s, false).unwrap(), &s, true).unwrap();
        for (x, y) in a.data().iter().zip(back.data()) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300));
        }
    }

    #[test]
    fn masked_sparse_is_idempotent(a in matrix(6, 5), bits in prop::collection::vec(any::<bool>(), 30)) {
        let mut mask = Mask::new(6, 5);
        for (k, &b) in bits.iter().enumerate() {
            mask.set_flat(k, b);
        }
        let once = sparse_from_mask(&a, &mask).unwrap().to_dense();
        let twice = sparse_from_mask(&once, &mask).unwrap().to_dense();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn frobenius_is_sum_of_column_norms(a in matrix(5, 7)) {
        let by_columns: f64 = (0..a.cols())
            .map(|j| (0..a.rows()).map(|i| a.get(i, j).powi(2)).sum::<f64>())
            .sum();
        let f = a.frobenius_norm();
        prop_assert!((f * f - by_columns).abs() <= 1e-9 * by_columns.max(1.0));
    }
}
