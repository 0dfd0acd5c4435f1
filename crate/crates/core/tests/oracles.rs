//! Library results checked against independent dense linear algebra.

use kbandit::baselines::{weighted_ridge_fit, wls_fit};
use kbandit::diagnostics::effective_dimension;
use kbandit::estimator::{full_system_matrix, rkhs_norm, ArmHistory, FitMethod, IpwkrEstimator, Solver};
use kbandit::harness::{fit_regret_exponent, loglog_fit};
use kbandit::kernels::{gram_matrix, KernelSpec};
use kbandit::linalg::Matrix;
use kbandit::policy::{lambda_at, LambdaSchedule};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn to_dmatrix(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn history(xs: &[Vec<f64>], ys: &[f64], ps: &[f64]) -> ArmHistory<f64> {
    let mut h = ArmHistory::new();
    for (s, ((x, &y), &p)) in xs.iter().zip(ys).zip(ps).enumerate() {
        h.record(x.clone(), y, p, s + 1).unwrap();
    }
    h
}

#[test]
fn linear_kernel_prediction_equals_primal_ridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..30 {
        let d = rng.random_range(1..=5usize);
        let t = rng.random_range(d + 1..=100usize);
        let lambda = rng.random_range(0.001..1.0);
        let xs = random_points(&mut rng, t, d);
        let ys: Vec<f64> = (0..t).map(|_| rng.random_range(-2.0..2.0)).collect();
        let ps: Vec<f64> = (0..t).map(|_| rng.random_range(0.05..1.0)).collect();

        let mut a = DMatrix::<f64>::identity(d, d) * lambda;
        let mut b = DVector::<f64>::zeros(d);
        for ((x, &y), &p) in xs.iter().zip(&ys).zip(&ps) {
            let v = DVector::from_column_slice(x);
            a += &v * v.transpose() / (p * t as f64);
            b += v * (y / (p * t as f64));
        }
        let theta = a.lu().solve(&b).unwrap();

        for solver in [Solver::default(), Solver::Direct(FitMethod::Cholesky)] {
            let mut est = IpwkrEstimator::new(KernelSpec::linear(d as f64).unwrap(), 1, solver);
            for (s, ((x, &y), &p)) in xs.iter().zip(&ys).zip(&ps).enumerate() {
                est.record_observation(0, x.clone(), y, p, s + 1).unwrap();
            }
            est.fit_arm(0, t, lambda).unwrap();
            for x in random_points(&mut rng, 5, d) {
                let primal = theta.dot(&DVector::from_column_slice(&x));
                let dual = est.predict(0, &x).unwrap();
                assert!((primal - dual).abs() < 1e-8, "{primal} vs {dual}");
            }
        }
    }
}

#[test]
fn primal_weighted_ridge_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (t, d) = (40, 3);
    let xs = random_points(&mut rng, t, d);
    let ys: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ps: Vec<f64> = (0..t).map(|_| rng.random_range(0.2..1.0)).collect();
    let h = history(&xs, &ys, &ps);
    let theta = weighted_ridge_fit(&h, t, 0.1).unwrap();

    let x = DMatrix::from_fn(t, d, |i, j| xs[i][j]);
    let w = DMatrix::from_diagonal(&DVector::from_iterator(t, ps.iter().map(|p| 1.0 / p)));
    let y = DVector::from_column_slice(&ys);
    let lhs = x.transpose() * &w * &x / t as f64 + DMatrix::identity(d, d) * 0.1;
    let rhs = x.transpose() * &w * y / t as f64;
    let oracle = lhs.cholesky().unwrap().solve(&rhs);
    for j in 0..d {
        assert!((theta[j] - oracle[j]).abs() < 1e-12);
    }
}

#[test]
fn single_arm_unit_propensity_is_kernel_ridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = 30;
    let kernel = KernelSpec::gaussian(1.3).unwrap();
    let xs = random_points(&mut rng, t, 2);
    let ys: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let lambda = 0.02;
    let mut est = IpwkrEstimator::new(kernel, 1, Solver::default());
    for (s, (x, &y)) in xs.iter().zip(&ys).enumerate() {
        est.record_observation(0, x.clone(), y, 1.0, s + 1).unwrap();
    }
    est.fit_arm(0, t, lambda).unwrap();

    let k = to_dmatrix(&gram_matrix(&kernel, &xs).unwrap());
    let alpha = (k + DMatrix::identity(t, t) * (t as f64 * lambda))
        .cholesky()
        .unwrap()
        .solve(&DVector::from_column_slice(&ys));
    for (z, a) in est.fit_state(0).unwrap().dual_coeffs.iter().zip(alpha.iter()) {
        assert!((z - a).abs() < 1e-10);
    }
}

#[test]
fn reduced_system_matches_full_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let t = rng.random_range(4..=40usize);
        let kernel = KernelSpec::gaussian(rng.random_range(0.5..2.0)).unwrap();
        let lambda = rng.random_range(0.01..0.5);
        let xs = random_points(&mut rng, t, 2);
        let arms: Vec<usize> = (0..t).map(|s| if s < 2 { s } else { rng.random_range(0..2) }).collect();
        let ps: Vec<f64> = (0..t).map(|_| rng.random_range(0.1..1.0)).collect();
        let ys: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut est = IpwkrEstimator::new(kernel, 2, Solver::Direct(FitMethod::Spectral));
        for s in 0..t {
            est.record_observation(arms[s], xs[s].clone(), ys[s], ps[s], s + 1).unwrap();
        }
        for arm in 0..2 {
            est.fit_arm(arm, t, lambda).unwrap();
            let w: Vec<f64> = (0..t).map(|s| if arms[s] == arm { 1.0 / ps[s] } else { 0.0 }).collect();
            let m = to_dmatrix(&full_system_matrix(&kernel, &xs, &w, t, lambda).unwrap());
            let rhs = DVector::from_fn(t, |i, _| w[i] * ys[i]);
            let alpha = m.lu().solve(&rhs).unwrap();
            let z = &est.fit_state(arm).unwrap().dual_coeffs;
            let own: Vec<f64> = (0..t).filter(|&s| arms[s] == arm).map(|s| alpha[s]).collect();
            for (a, b) in own.iter().zip(z) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
            for s in (0..t).filter(|&s| arms[s] != arm) {
                assert!(alpha[s].abs() < 1e-12);
            }
        }
    }
}

#[test]
fn full_rank_wls_is_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (t, d) = (25, 4);
    let xs = random_points(&mut rng, t, d);
    let ys: Vec<f64> = (0..t).map(|_| rng.random_range(-1.0..1.0)).collect();
    let theta = wls_fit(&history(&xs, &ys, &vec![1.0; t])).unwrap();
    let x = DMatrix::from_fn(t, d, |i, j| xs[i][j]);
    let y = DVector::from_column_slice(&ys);
    let oracle = (x.transpose() * &x).lu().solve(&(x.transpose() * y)).unwrap();
    for j in 0..d {
        assert!((theta[j] - oracle[j]).abs() < 1e-10);
    }
}

#[test]
fn rank_deficient_wls_is_min_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let base = random_points(&mut rng, 2, 3);
    // Rows span only a 2-D subspace of R³.
    let xs: Vec<Vec<f64>> = (0..12).map(|i| base[i % 2].clone()).collect();
    let ys: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let theta = wls_fit(&history(&xs, &ys, &[1.0; 12])).unwrap();

    let x = DMatrix::from_fn(12, 3, |i, j| xs[i][j]);
    let y = DVector::from_column_slice(&ys);
    let oracle = x.clone().pseudo_inverse(1e-12).unwrap() * &y;
    for j in 0..3 {
        assert!((theta[j] - oracle[j]).abs() < 1e-8, "{theta:?} vs {oracle}");
    }
    let residual = |th: &DVector<f64>| (&x * th - &y).norm();
    let xr = DMatrix::from_fn(2, 3, |i, j| base[i][j]);
    let ybar = DVector::from_fn(2, |i, _| (0..12).filter(|s| s % 2 == i).map(|s| ys[s]).sum::<f64>() / 6.0);
    let sub = xr.pseudo_inverse(1e-12).unwrap() * ybar;
    assert!((residual(&DVector::from_column_slice(&theta)) - residual(&sub)).abs() < 1e-9);
}

#[test]
fn rkhs_norm_matches_double_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kernel = KernelSpec::gaussian(0.9).unwrap();
    for _ in 0..50 {
        let pts = random_points(&mut rng, 5, 2);
        let a: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut sq = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                let d2: f64 = pts[i].iter().zip(&pts[j]).map(|(u, v)| (u - v) * (u - v)).sum();
                sq += a[i] * a[j] * (-0.81 * d2).exp();
            }
        }
        let got = rkhs_norm(&kernel, &a, &pts).unwrap();
        assert!((got - sq.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn gram_is_numerically_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kernel in [KernelSpec::gaussian(2.0).unwrap(), KernelSpec::linear(3.0).unwrap()] {
        let pts = random_points(&mut rng, 40, 3);
        let g = to_dmatrix(&gram_matrix(&kernel, &pts).unwrap());
        let min = g.clone().symmetric_eigen().eigenvalues.min();
        assert!(min >= -1e-9 * g.trace());
    }
}

#[test]
fn effective_dimension_matches_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let b = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
    let s = &b * b.transpose();
    let sigma = Matrix::from_rows(&(0..4).map(|i| (0..4).map(|j| s[(i, j)]).collect()).collect::<Vec<_>>()).unwrap();
    for lambda in [1e-3, 0.1, 1.0, 10.0] {
        let oracle: f64 = s.clone().symmetric_eigen().eigenvalues.iter().map(|e| e / (e + lambda)).sum();
        assert!((effective_dimension(&sigma, lambda).unwrap() - oracle).abs() < 1e-10);
    }
}

#[test]
fn finite_dim_lambda_matches_direct_summation() {
    let t = 1000;
    let eps: Vec<f64> = (1..=t).map(|s| (s as f64).powf(-1.0 / 3.0)).collect();
    let lambda = lambda_at(&LambdaSchedule::FiniteDim { scale: 1.0 }, t, &eps).unwrap();
    let sum: f64 = (1..=t).rev().map(|s| (s as f64).cbrt()).sum();
    let oracle = (sum / (t * t) as f64).sqrt();
    assert!((lambda - oracle).abs() < 1e-12 * oracle);
}

#[test]
fn power_law_slope_matches_matrix_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ts: Vec<f64> = (1..=500).map(|t| t as f64).collect();
    let ys: Vec<f64> = ts.iter().map(|t| 3.0 * t.powf(0.6) * (1.0 + rng.random_range(-0.1..0.1))).collect();
    let fit = loglog_fit(&ts, &ys).unwrap();

    let design = DMatrix::from_fn(ts.len(), 2, |i, j| if j == 0 { 1.0 } else { ts[i].ln() });
    let target = DVector::from_iterator(ys.len(), ys.iter().map(|y| y.ln()));
    let beta = design.svd(true, true).solve(&target, 1e-14).unwrap();
    assert!((fit.slope - beta[1]).abs() < 1e-9);
    assert!((fit.intercept - beta[0]).abs() < 1e-9);

    let windowed = fit_regret_exponent(&ys, 0.5).unwrap();
    let tail = loglog_fit(&ts[249..], &ys[249..]).unwrap();
    assert_eq!(windowed, tail);
}
