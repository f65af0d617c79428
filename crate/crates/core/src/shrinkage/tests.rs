use super::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_instance(rng: &mut ChaCha8Rng, n: usize, p: usize, beta: &[f64], noise: f64) -> (DMatrix<f64>, DVector<f64>) {
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let y = DVector::from_fn(n, |i, _| {
        (0..p).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + noise * rng.sample::<f64, _>(StandardNormal)
    });
    (x, y)
}

/// Modified Gram-Schmidt QR followed by back substitution.
fn qr_oracle(x: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut q = x.clone();
    let mut r = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        for k in 0..j {
            let d = q.column(k).dot(&q.column(j));
            r[(k, j)] = d;
            for i in 0..n {
                q[(i, j)] -= d * q[(i, k)];
            }
        }
        let norm = q.column(j).norm();
        r[(j, j)] = norm;
        for i in 0..n {
            q[(i, j)] /= norm;
        }
    }
    let qty = q.tr_mul(y);
    let mut b = vec![0.0; p];
    for j in (0..p).rev() {
        let s: f64 = (j + 1..p).map(|k| r[(j, k)] * b[k]).sum();
        b[j] = (qty[j] - s) / r[(j, j)];
    }
    b
}

#[test]
fn soft_threshold_examples() {
    assert_eq!(soft_threshold(3.0, 1.0), 2.0);
    assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
    assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    assert_eq!(soft_threshold(1.25, 0.0), 1.25);
}

#[test]
fn ols_exact_line_and_rank_deficiency() {
    let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
    let y = DVector::from_column_slice(&[2.0, 4.0, 6.0, 8.0]);
    let b = fit_ols(&x, &y).unwrap();
    assert!((b[0] - 2.0).abs() < 1e-14);

    let dup = DMatrix::from_fn(6, 2, |i, _| i as f64 + 1.0);
    let y = DVector::from_fn(6, |i, _| i as f64);
    assert_eq!(fit_ols(&dup, &y), Err(ShrinkageError::SingularDesign));
}

#[test]
fn ols_matches_qr_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (x, y) = random_instance(&mut rng, 200, 5, &[0.5, -1.0, 0.0, 2.0, 0.3], 0.7);
    let b = fit_ols(&x, &y).unwrap();
    let oracle = qr_oracle(&x, &y);
    for (a, o) in b.iter().zip(&oracle) {
        assert!((a - o).abs() < 1e-10, "{a} vs {o}");
    }
    let r = &y - &x * DVector::from_column_slice(&b);
    let scale = x.abs().max() * y.abs().max() * 200.0;
    assert!(x.tr_mul(&r).amax() <= 1e-8 * scale);
}

#[test]
fn zero_lambda_lasso_equals_ols_with_intercept() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, mut y) = random_instance(&mut rng, 80, 3, &[1.0, -0.5, 0.25], 0.3);
    y.add_scalar_mut(4.0);
    let fit = fit_penalized(&x, &y, &PenaltySpec::lasso(0.0), &SolverOptions::default()).unwrap();
    let xi = DMatrix::from_fn(80, 4, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let oracle = qr_oracle(&xi, &y);
    assert!((fit.intercept - oracle[0]).abs() < 1e-8);
    for j in 0..3 {
        assert!((fit.coefficients[j] - oracle[j + 1]).abs() < 1e-8);
    }
}

#[test]
fn lambda_max_zeroes_every_slope() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (x, y) = random_instance(&mut rng, 60, 4, &[1.0, 0.0, -2.0, 0.5], 1.0);
    for spec in [PenaltySpec::lasso(1.0), PenaltySpec::elastic_net(1.0, 0.5)] {
        let lmax = lambda_max(&x, &y, &spec);
        for mult in [1.0, 1.5, 10.0] {
            let s = spec.with_lambda(lmax * mult);
            let fit = fit_penalized(&x, &y, &s, &SolverOptions::default()).unwrap();
            assert!(fit.coefficients.iter().all(|b| *b == 0.0));
            assert!(kkt_violation(&x, &y, &fit, &s) < 1e-12);
        }
        let fit = fit_penalized(&x, &y, &spec.with_lambda(0.9 * lmax), &SolverOptions::default()).unwrap();
        assert!(!fit.active_set.is_empty());
    }
}

#[test]
fn lasso_two_dimensional_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (x, y) = random_instance(&mut rng, 50, 2, &[0.8, -0.3], 0.5);
    let spec = PenaltySpec::lasso(0.1);
    let fit = fit_penalized(&x, &y, &spec, &SolverOptions::default()).unwrap();
    // Profile the intercept out exactly and scan slopes on a fine grid.
    let prob = GramProblem::new(&x, &y);
    let l1 = spec.l1_thresholds(2);
    let step = 2e-3;
    let mut best = f64::INFINITY;
    for a in -1000..=1000 {
        for b in -1000..=1000 {
            let v = prob.objective(&[a as f64 * step, b as f64 * step], &l1, 0.0);
            best = best.min(v);
        }
    }
    assert!(fit.objective <= best + 1e-12);
    // The grid point nearest the optimum is within grid resolution.
    assert!(best - fit.objective < 4.0 * step * step + 2.0 * step * 0.1);
    assert!(kkt_violation(&x, &y, &fit, &spec) < 1e-6);
}

#[test]
fn elastic_net_groups_duplicated_columns() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 120;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let x = DMatrix::from_fn(n, 3, |i, j| if j == 2 { w[i] } else { z[i] });
    let y = DVector::from_fn(n, |i, _| {
        2.0 * z[i] + 0.5 * w[i] + 0.1 * rng.sample::<f64, _>(StandardNormal)
    });
    let spec = PenaltySpec::elastic_net(0.05, 0.5);
    let fit = fit_penalized(&x, &y, &spec, &SolverOptions::default()).unwrap();
    assert!(fit.coefficients[0] > 0.1);
    assert!((fit.coefficients[0] - fit.coefficients[1]).abs() < 1e-6);

    let lasso = fit_penalized(&x, &y, &PenaltySpec::lasso(0.05), &SolverOptions::default()).unwrap();
    let total = lasso.coefficients[0] + lasso.coefficients[1];
    assert!((total - 2.0 * fit.coefficients[0]).abs() < 1.0);
}

#[test]
fn adaptive_weight_examples() {
    assert_eq!(adaptive_weights(&[2.0], 1.0), vec![0.5]);
    assert!((adaptive_weights(&[0.0], 1.0)[0] - 1e6).abs() < 1e-6);
    assert!((adaptive_weights(&[0.1], 2.0)[0] - 100.0).abs() < 1e-9);
    assert!((adaptive_weights(&[-0.1], 2.0)[0] - 100.0).abs() < 1e-9);
}

#[test]
fn pilot_falls_back_to_ridge_when_wide() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (x, y) = random_instance(&mut rng, 10, 12, &[1.0; 12], 0.1);
    let pilot = pilot_coefficients(&x, &y).unwrap();
    assert_eq!(pilot.len(), 12);
    assert!(pilot.iter().all(|b| b.is_finite()));
}

#[test]
fn grid_endpoints_and_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (x, y) = random_instance(&mut rng, 40, 3, &[1.0, 0.0, 0.0], 0.5);
    let spec = PenaltySpec::lasso(1.0);
    let g = lambda_grid(&x, &y, &spec, 100, 1e-4).unwrap();
    let lmax = lambda_max(&x, &y, &spec);
    assert_eq!(g.len(), 100);
    assert_eq!(g[0], lmax);
    assert_eq!(g[99], lmax * 1e-4);
    assert!(g.windows(2).all(|w| w[0] > w[1]));
    assert!(lambda_grid(&x, &y, &spec, 1, 1e-4).is_err());
}

#[test]
fn orthogonal_noise_has_small_lambda_max() {
    // y is exactly orthogonal to the centered column.
    let x = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
    let y = DVector::from_column_slice(&[1.0, 1.0, -1.0, -1.0]);
    assert!(lambda_max(&x, &y, &PenaltySpec::lasso(1.0)) < 1e-15);
}

#[test]
fn invalid_specs_are_rejected() {
    let x = DMatrix::from_element(5, 2, 1.0);
    let y = DVector::from_element(5, 1.0);
    let opts = SolverOptions::default();
    assert!(matches!(
        fit_penalized(&x, &y, &PenaltySpec::lasso(-1.0), &opts),
        Err(ShrinkageError::InvalidPenalty(_))
    ));
    let mut s = PenaltySpec::adaptive_lasso(0.1, vec![1.0]);
    assert!(fit_penalized(&x, &y, &s, &opts).is_err());
    s.weights = None;
    assert!(fit_penalized(&x, &y, &s, &opts).is_err());
    let mut bad = y.clone();
    bad[2] = f64::NAN;
    assert_eq!(
        fit_penalized(&x, &bad, &PenaltySpec::lasso(0.1), &opts),
        Err(ShrinkageError::NonFiniteInput)
    );
    assert_eq!("enet".parse::<PenaltyKind>().unwrap(), PenaltyKind::ElasticNet);
    assert_eq!("ols".parse::<PenaltyKind>().unwrap(), PenaltyKind::None);
    assert!("scad".parse::<PenaltyKind>().is_err());
}

#[test]
fn iteration_cap_reports_non_convergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (x, y) = random_instance(&mut rng, 50, 6, &[1.0, 1.0, 1.0, -1.0, 0.5, 0.0], 0.2);
    let opts = SolverOptions {
        tol: 1e-15,
        max_iter: 1,
    };
    assert_eq!(
        fit_penalized(&x, &y, &PenaltySpec::lasso(1e-3), &opts),
        Err(ShrinkageError::NotConverged { max_iter: 1 })
    );
}

#[test]
fn fits_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (x, y) = random_instance(&mut rng, 70, 8, &[1.0, 0.0, 0.0, 0.5, 0.0, 0.0, -1.0, 0.0], 0.5);
    let spec = PenaltySpec::elastic_net(0.02, 0.5);
    let a = fit_penalized(&x, &y, &spec, &SolverOptions::default()).unwrap();
    let b = fit_penalized(&x, &y, &spec, &SolverOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn leave_one_out_folds_score_each_row_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 12;
    let (x, y) = random_instance(&mut rng, n, 2, &[1.0, -0.5], 0.3);
    let spec = PenaltySpec::lasso(1.0);
    let opts = CvOptions {
        folds: n,
        n_grid: 5,
        ..CvOptions::default()
    };
    let cv = cross_validate(&x, &y, &spec, &opts).unwrap();
    for (lambda, err) in cv.lambdas.iter().zip(&cv.errors) {
        let mut manual = 0.0;
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let xs = DMatrix::from_fn(n - 1, 2, |r, c| x[(keep[r], c)]);
            let ys = DVector::from_fn(n - 1, |r, _| y[keep[r]]);
            let f = fit_penalized(&xs, &ys, &spec.with_lambda(*lambda), &SolverOptions::default()).unwrap();
            let row = [x[(i, 0)], x[(i, 1)]];
            manual += (y[i] - f.predict_row(&row)).powi(2);
        }
        assert!((err - manual).abs() < 1e-9 * (1.0 + manual), "{err} vs {manual}");
    }
}

#[test]
fn cv_rejects_short_samples() {
    let x = DMatrix::from_element(9, 1, 1.0);
    let y = DVector::from_element(9, 1.0);
    assert_eq!(
        cross_validate(&x, &y, &PenaltySpec::lasso(1.0), &CvOptions::default()),
        Err(ShrinkageError::TooFewRows { rows: 9, folds: 5 })
    );
}

#[test]
fn cv_prefers_large_penalties_on_noise_and_small_on_signal() {
    let reps = 200;
    let grid = 50;
    let opts = CvOptions {
        n_grid: grid,
        ..CvOptions::default()
    };
    let (mut noise_high, mut signal_low) = (0, 0);
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + rep);
        let (x, y) = random_instance(&mut rng, 100, 5, &[0.0; 5], 1.0);
        let cv = cross_validate(&x, &y, &PenaltySpec::lasso(1.0), &opts).unwrap();
        noise_high += usize::from(cv.best_index < grid / 2);

        let (x, y) = random_instance(&mut rng, 100, 5, &[1.0, -1.0, 0.8, 0.6, -0.9], 0.01);
        let cv = cross_validate(&x, &y, &PenaltySpec::lasso(1.0), &opts).unwrap();
        signal_low += usize::from(cv.best_index >= grid - grid / 10);
    }
    assert!(noise_high as f64 >= 0.8 * reps as f64, "noise: {noise_high}/{reps}");
    assert!(signal_low as f64 >= 0.8 * reps as f64, "signal: {signal_low}/{reps}");
}

#[test]
fn l1_norm_shrinks_along_the_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (x, y) = random_instance(&mut rng, 90, 6, &[1.0, 0.5, 0.0, -0.7, 0.0, 0.2], 0.8);
    let spec = PenaltySpec::lasso(1.0);
    let grid = lambda_grid(&x, &y, &spec, 40, 1e-3).unwrap();
    let norms: Vec<f64> = grid
        .iter()
        .map(|l| {
            fit_penalized(&x, &y, &spec.with_lambda(*l), &SolverOptions::default())
                .unwrap()
                .l1_norm()
        })
        .collect();
    // Grid is descending, so norms must be non-decreasing.
    assert!(norms.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{norms:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fitted_objective_beats_random_probes(
        seed in 0u64..10_000,
        p in 1usize..6,
        lambda in 1e-3f64..0.5,
        enet in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let beta: Vec<f64> = (0..p).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (x, y) = random_instance(&mut rng, 40, p, &beta, 0.5);
        let spec = if enet { PenaltySpec::elastic_net(lambda, 0.5) } else { PenaltySpec::lasso(lambda) };
        let fit = fit_penalized(&x, &y, &spec, &SolverOptions::default()).unwrap();
        prop_assert!(kkt_violation(&x, &y, &fit, &spec) < 1e-6);
        for _ in 0..200 {
            let probe: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
            let b0: f64 = rng.random_range(-2.0..2.0);
            prop_assert!(fit.objective <= objective(&x, &y, b0, &probe, &spec) + 1e-8);
        }
    }

    #[test]
    fn lambda_monotonicity(seed in 0u64..10_000, l1 in 1e-3f64..1.0, ratio in 1.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y) = random_instance(&mut rng, 60, 4, &[1.0, -0.5, 0.2, 0.0], 0.5);
        let small = fit_penalized(&x, &y, &PenaltySpec::lasso(l1), &SolverOptions::default()).unwrap();
        let large = fit_penalized(&x, &y, &PenaltySpec::lasso(l1 * ratio), &SolverOptions::default()).unwrap();
        prop_assert!(small.l1_norm() >= large.l1_norm() - 1e-9);
    }
}
