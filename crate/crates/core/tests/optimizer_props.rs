use sslc::lowrank::{exact_truncated_svd, scaled_lowrank_step, LowRankFactors};
use sslc::matrix::{scale_columns, ColumnScaling, DenseMatrix, SeededRng};
use sslc::optimizer::{compress, loss_of, preserve_top, CompressionPlan, StepOutcome};
use sslc::salience::prune;
use sslc::synthetic::{lognormal_norms, Planted};

fn scaled_error(w: &DenseMatrix, approx: &DenseMatrix, scaling: &ColumnScaling) -> f64 {
    scale_columns(&w.sub(approx).unwrap(), scaling, false)
        .unwrap()
        .frobenius_norm()
}

#[test]
fn preservation_keeps_the_largest_magnitudes() {
    let w = SeededRng::new(12).gaussian_matrix(10, 10);
    let p = preserve_top(&w, &ColumnScaling::unit(10), 0.05).unwrap();

    let mut order: Vec<usize> = (0..100).collect();
    order.sort_by(|&a, &b| w.data()[b].abs().partial_cmp(&w.data()[a].abs()).unwrap());
    let mut want: Vec<(usize, usize)> = order[..5].iter().map(|&k| (k / 10, k % 10)).collect();
    want.sort();
    let got: Vec<(usize, usize)> = p.preserved.iter().map(|(i, j, _)| (i, j)).collect();
    assert_eq!(got, want);

    let rebuilt = p.preserved.to_dense().add(&p.remainder).unwrap();
    assert_eq!(rebuilt, w);
}

#[test]
fn loss_matches_densified_oracle() {
    let mut rng = SeededRng::new(30);
    let w = rng.gaussian_matrix(7, 5);
    let s = sslc::matrix::sparse_from_mask(&w, &sslc::matrix::Mask::from_fn(7, 5, |i, j| (i + j) % 3 == 0)).unwrap();
    let f = LowRankFactors::new(rng.gaussian_matrix(7, 2), rng.gaussian_matrix(5, 2)).unwrap();
    let scaling = lognormal_norms(5, 1.0, 2);
    let approx = s.to_dense().add(&f.product()).unwrap();
    let want = scaled_error(&w, &approx, &scaling);
    assert!((loss_of(&w, &s, &f, &scaling).unwrap() - want).abs() <= 1e-10 * want);
}

#[test]
fn exact_rank_input_is_captured() {
    let mut rng = SeededRng::new(5);
    let w = LowRankFactors::new(rng.gaussian_matrix(40, 3), rng.gaussian_matrix(30, 3))
        .unwrap()
        .product();
    let scaling = lognormal_norms(30, 0.5, 1);
    // Preserved positions are zero in the decomposed remainder, so any
    // non-zero L there counts as error; exact capture needs preserve = 0.
    let plan = CompressionPlan::new(0.5, 3).with_preserve(0.0);
    let layer = compress(&w, &scaling, &plan).unwrap();
    assert!(layer.meta.final_loss <= 1e-6 * layer.meta.trace.raw_initial);
}

#[test]
fn planted_instance_beats_both_degenerate_baselines() {
    let (m, n, r) = (64, 48, 8);
    let w = Planted::new(m, n, r).generate(0);
    let scaling = lognormal_norms(n, 0.5, 0);
    let layer = compress(&w, &scaling, &CompressionPlan::new(0.5, r).with_seed(0)).unwrap();

    let pruned = prune(&w, &scaling, 0.5).unwrap().to_dense();
    let prune_loss = scaled_error(&w, &pruned, &scaling);

    let svd_rank = (0.5 * (m * n) as f64 / (m + n) as f64).floor() as usize;
    let scaled = scale_columns(&w, &scaling, false).unwrap();
    let best = exact_truncated_svd(&scaled, svd_rank).unwrap().product();
    let svd_loss = scaled.sub(&best).unwrap().frobenius_norm();

    assert!(layer.meta.final_loss < prune_loss, "{} vs {prune_loss}", layer.meta.final_loss);
    assert!(layer.meta.final_loss < svd_loss, "{} vs {svd_loss}", layer.meta.final_loss);
}

#[test]
fn rank_zero_is_plain_pruning() {
    let w = Planted::new(40, 30, 3).generate(2);
    let scaling = lognormal_norms(30, 1.0, 4);
    for preserve in [0.0, 0.01] {
        let plan = CompressionPlan::new(0.5, 0).with_preserve(preserve);
        let layer = compress(&w, &scaling, &plan).unwrap();
        assert_eq!(layer.s, prune(&w, &scaling, 0.5).unwrap(), "preserve {preserve}");
        assert_eq!(layer.factors.rank(), 0);
    }
}

#[test]
fn pure_lowrank_single_pass_is_the_scaled_step() {
    let (m, n, r) = (24, 20, 2);
    let w = SeededRng::new(6).gaussian_matrix(m, n);
    let scaling = lognormal_norms(n, 0.7, 8);
    let share = (r * (m + n)) as f64 / (m * n) as f64;
    let plan = CompressionPlan::new(share, r)
        .with_preserve(0.0)
        .with_iterations(1)
        .with_seed(77);
    let layer = compress(&w, &scaling, &plan).unwrap();
    assert_eq!(layer.s.nnz(), 0);
    let direct = scaled_lowrank_step(&w, &scaling, r, &mut SeededRng::new(77), &plan.brp_options()).unwrap();
    assert_eq!(layer.factors, direct);
}

#[test]
fn budget_and_preservation_invariants() {
    let (m, n) = (50, 40);
    let w = Planted::new(m, n, 4).generate(9);
    let scaling = lognormal_norms(n, 0.8, 9);
    let plan = CompressionPlan::new(0.45, 4).with_iterations(15);
    let layer = compress(&w, &scaling, &plan).unwrap();

    let p = plan.remaining_fraction;
    let fraction = layer.parameter_fraction();
    assert!(fraction <= p + 1e-6);
    assert!(fraction >= p - 1.0 / (m * n) as f64 - 1e-12);
    assert!(layer.meta.final_loss <= layer.meta.trace.raw_initial);

    let preserved = preserve_top(&w, &scaling, plan.preserve_fraction).unwrap().preserved;
    let dense_s = layer.s.to_dense();
    for (i, j, v) in preserved.iter() {
        assert_eq!(dense_s.get(i, j).to_bits(), v.to_bits());
    }
}

#[test]
fn compression_is_deterministic() {
    let w = Planted::new(32, 32, 4).generate(1);
    let scaling = lognormal_norms(32, 0.5, 1);
    let plan = CompressionPlan::new(0.5, 4).with_seed(123).with_iterations(12);
    let a = compress(&w, &scaling, &plan).unwrap();
    let b = compress(&w, &scaling, &plan).unwrap();
    assert_eq!(a.s, b.s);
    assert_eq!(a.factors, b.factors);
    assert_eq!(a.meta.trace.chain(), b.meta.trace.chain());
}

#[test]
fn safeguarded_chain_is_monotone() {
    for seed in 0..6 {
        let w = Planted::new(48, 40, 5).generate(100 + seed);
        let scaling = lognormal_norms(40, 0.5, seed);
        let plan = CompressionPlan::new(0.5, 5).with_seed(seed).with_early_stop(false);
        let layer = compress(&w, &scaling, &plan).unwrap();
        let trace = &layer.meta.trace;
        assert!(trace.is_monotone(0.0), "seed {seed}: {:?}", trace.chain());
        let outcomes = trace.count(StepOutcome::Accepted)
            + trace.count(StepOutcome::Retried)
            + trace.count(StepOutcome::Rejected);
        assert_eq!(outcomes, trace.records.len());
    }
}

#[test]
fn one_shot_baseline_has_no_lowrank_part() {
    let w = Planted::new(30, 20, 2).generate(4);
    let scaling = lognormal_norms(20, 0.5, 4);
    let plan = CompressionPlan::new(0.5, 2).with_iterations(0);
    let layer = compress(&w, &scaling, &plan).unwrap();
    assert!(layer.meta.trace.records.is_empty());
    assert_eq!(layer.factors.product(), DenseMatrix::zeros(30, 20));
    let counts = layer.meta.budget.entry_counts(30, 20);
    assert_eq!(layer.s.nnz(), counts.preserved + counts.sparse);
    let with_loop = compress(&w, &scaling, &plan.clone().with_iterations(10)).unwrap();
    assert!(with_loop.meta.final_loss < layer.meta.final_loss);
}

#[test]
fn infeasible_plans_are_rejected() {
    let w = DenseMatrix::zeros(10, 10);
    let err = compress(&w, &ColumnScaling::unit(10), &CompressionPlan::new(0.2, 2));
    assert!(matches!(err, Err(sslc::Error::InfeasiblePlan(_))));
}
