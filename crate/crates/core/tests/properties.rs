use kbandit::baselines::KernelUcb;
use kbandit::cli_io::config::{parse_config, serialize_config};
use kbandit::diagnostics::effective_dimension;
use kbandit::environments::{make_inrkhs_environment, ContextDist, Environment, Expansion};
use kbandit::estimator::{rkhs_error_norm, ArmFit, ArmHistory, IpwkrEstimator, Solver};
use kbandit::harness::{
    simulate, EnvKind, EnvSpec, ExperimentConfig, KernelConfig, Learner, PolicyKind, PolicySpec,
};
use kbandit::kernels::{gram_matrix, KernelKind, KernelSpec};
use kbandit::linalg::Matrix;
use kbandit::policy::{epsilon_at, lambda_at, select_arm, EpsilonSchedule, LambdaSchedule, ScheduleSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propensities_are_exact(
        estimates in prop::collection::vec(-5.0..5.0f64, 2..6),
        frac in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        let l = estimates.len();
        let eps = frac * (l - 1) as f64 / l as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = select_arm(&estimates, eps, &mut rng).unwrap();
        prop_assert_eq!(d.propensities[d.greedy_arm], 1.0 - eps);
        for (a, &p) in d.propensities.iter().enumerate() {
            if a != d.greedy_arm {
                prop_assert_eq!(p, eps / (l - 1) as f64);
            }
        }
        let total: f64 = d.propensities.iter().sum();
        prop_assert!((total - 1.0).abs() <= l as f64 * f64::EPSILON);
        prop_assert_eq!(d.explored, d.chosen_arm != d.greedy_arm);
    }

    #[test]
    fn greedy_arm_ignores_constant_shift(
        estimates in prop::collection::vec(-5.0..5.0f64, 2..6),
        shift in -3.0..3.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = select_arm(&estimates, 0.0, &mut rng).unwrap().greedy_arm;
        let shifted: Vec<f64> = estimates.iter().map(|e| e + shift).collect();
        let b = select_arm(&shifted, 0.0, &mut rng).unwrap().greedy_arm;
        // A shift can only merge or split exact ties through rounding.
        prop_assert!(a == b || (estimates[a] - estimates[b]).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_symmetric_and_gaussian_bounded(
        x in point(3),
        y in point(3),
        gamma in 0.05..5.0f64,
    ) {
        let g = KernelSpec::gaussian(gamma).unwrap();
        let l = KernelSpec::linear(3.0).unwrap();
        prop_assert_eq!(g.eval(&x, &y).unwrap(), g.eval(&y, &x).unwrap());
        prop_assert_eq!(l.eval(&x, &y).unwrap(), l.eval(&y, &x).unwrap());
        let v = g.eval(&x, &y).unwrap();
        prop_assert!(v > 0.0 && v <= 1.0);
    }

    #[test]
    fn gram_is_bitwise_symmetric(pts in prop::collection::vec(point(2), 1..12), gamma in 0.1..4.0f64) {
        let m = gram_matrix(&KernelSpec::gaussian(gamma).unwrap(), &pts).unwrap();
        for i in 0..pts.len() {
            for j in 0..pts.len() {
                prop_assert_eq!(m[(i, j)].to_bits(), m[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn finite_dim_lambda_with_constant_epsilon(eps in 0.01..0.5f64, t in 1usize..2000, scale in 0.1..10.0f64) {
        let hist = vec![eps; t];
        let got = lambda_at(&LambdaSchedule::FiniteDim { scale }, t, &hist).unwrap();
        let closed = scale * (1.0 / (eps * t as f64)).sqrt();
        prop_assert!((got - closed).abs() <= 1e-12 * closed);
    }

    #[test]
    fn prediction_is_linear_in_rewards(
        xs in prop::collection::vec(point(2), 2..15),
        seed in any::<u64>(),
        lambda in 0.01..1.0f64,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = xs.len();
        let ps: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let y1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kernel = KernelSpec::gaussian(1.0).unwrap();
        let fit = |ys: &[f64]| {
            let mut e = IpwkrEstimator::new(kernel, 1, Solver::default());
            for s in 0..n {
                e.record_observation(0, xs[s].clone(), ys[s], ps[s], s + 1).unwrap();
            }
            e.fit_arm(0, n, lambda).unwrap();
            e
        };
        let sum: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + b).collect();
        let (e1, e2, e12) = (fit(&y1), fit(&y2), fit(&sum));
        let x = vec![0.3, -0.2];
        let lhs = e12.predict(0, &x).unwrap();
        let rhs = e1.predict(0, &x).unwrap() + e2.predict(0, &x).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn rkhs_error_norm_is_a_norm(
        pts in prop::collection::vec(point(2), 3),
        a in prop::collection::vec(-1.0..1.0f64, 3),
        b in prop::collection::vec(-1.0..1.0f64, 3),
        c in prop::collection::vec(-1.0..1.0f64, 3),
    ) {
        let kernel = KernelSpec::gaussian(1.2).unwrap();
        let mut h = ArmHistory::new();
        for (s, p) in pts.iter().enumerate() {
            h.record(p.clone(), 0.0, 1.0, s + 1).unwrap();
        }
        let as_fit = |v: &[f64]| ArmFit { dual_coeffs: v.to_vec(), fitted_lambda: 1.0, fitted_t: 3, jitter: 0.0 };
        let d = |u: &[f64], v: &[f64]| rkhs_error_norm(&kernel, Some(&as_fit(u)), &h, v, &pts).unwrap();
        prop_assert!(d(&a, &b) >= 0.0);
        prop_assert!(d(&a, &a) < 1e-7);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
    }

    #[test]
    fn effective_dimension_is_bounded(
        entries in prop::collection::vec(-1.0..1.0f64, 9),
        lambda in 1e-3..10.0f64,
    ) {
        let b: Vec<Vec<f64>> = entries.chunks(3).map(|r| r.to_vec()).collect();
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..3).map(|j| (0..3).map(|k| b[i][k] * b[j][k]).sum()).collect())
            .collect();
        let sigma = Matrix::from_rows(&rows).unwrap();
        let n = effective_dimension(&sigma, lambda).unwrap();
        prop_assert!(n >= 0.0);
        prop_assert!(n <= 3.0f64.min(sigma.trace() / lambda) + 1e-9);
    }

    #[test]
    fn ucb_score_grows_with_tau(
        xs in prop::collection::vec(point(1), 1..8),
        x in point(1),
        tau in 0.0..3.0f64,
        extra in 0.01..2.0f64,
    ) {
        let kernel = KernelSpec::gaussian(1.0).unwrap();
        let score = |tau: f64| {
            let mut u = KernelUcb::new(kernel, 0.5, tau, 1).unwrap();
            for p in &xs {
                u.observe(0, p.clone(), p[0]).unwrap();
            }
            u.ucb_score(0, &x).unwrap()
        };
        prop_assert!(score(tau + extra) >= score(tau));
    }

    #[test]
    fn instantaneous_regret_is_nonnegative(x in point(3), seed in any::<u64>()) {
        let envs = [
            Environment::setting1(0.5).unwrap(),
            Environment::setting2(0.5).unwrap(),
        ];
        for env in &envs {
            let x = &x[..env.dim()];
            let means = env.mean_rewards(x).unwrap();
            let (_, best) = env.optimal_arm(x).unwrap();
            prop_assert!(means.iter().all(|&m| best - m >= 0.0));
        }
        let (xs, ws) = Environment::setting3_parameters(seed, 3);
        let env = Environment::setting3(xs, ws, 0.5).unwrap();
        let ctx = vec![x[0] * 10.0, -x[0] * 3.0, x[0]];
        prop_assert!(env.mean_rewards(&ctx).unwrap().iter().all(|&m| m >= 0.0));
    }
}

fn arb_lambda() -> impl Strategy<Value = LambdaSchedule<f64>> {
    prop_oneof![
        (0.1..5.0f64).prop_map(|scale| LambdaSchedule::FiniteDim { scale }),
        (1.1..4.0f64, 0.05..0.5f64, 0.01..0.99f64, 0.1..5.0f64).prop_map(|(alpha, source, delta, scale)| {
            LambdaSchedule::InfiniteDim { alpha, source, delta, scale }
        }),
        (1e-5..1.0f64).prop_map(LambdaSchedule::Fixed),
        (0.05..1.0f64, 0.1..5.0f64).prop_map(|(power, scale)| LambdaSchedule::LogPower { power, scale }),
    ]
}

fn arb_epsilon() -> impl Strategy<Value = EpsilonSchedule<f64>> {
    prop_oneof![
        Just(EpsilonSchedule::PaperSim),
        (0.05..0.95f64, 0.1..2.0f64).prop_map(|(beta, scale)| EpsilonSchedule::PowerLaw { beta, scale }),
        (0.01..0.5f64).prop_map(EpsilonSchedule::Constant),
    ]
}

fn arb_env() -> impl Strategy<Value = EnvSpec> {
    let kind = prop_oneof![
        Just(EnvKind::Setting1),
        Just(EnvKind::Setting2),
        Just(EnvKind::Setting3 { x_star: None, w_star: None }),
        (point(3), point(3)).prop_map(|(x, w)| EnvKind::Setting3 { x_star: Some(x), w_star: Some(w) }),
        Just(EnvKind::Setting4),
        (0.2..3.0f64, point(2), -2.0..2.0f64).prop_map(|(gamma, p, c)| EnvKind::InRkhs {
            context: ContextDist::Uniform { dim: 2 },
            kernel: KernelKind::Gaussian,
            gamma,
            arms: vec![
                Expansion::new(vec![c], vec![p.clone()]).unwrap(),
                Expansion::new(vec![-c, 0.5], vec![p, vec![0.0, 0.0]]).unwrap(),
            ],
        }),
        prop::collection::vec(-1.0..1.0f64, 2..4).prop_map(|means| EnvKind::Constant {
            context: ContextDist::TruncNormal { dim: 2 },
            means,
        }),
    ];
    (kind, 0.01..2.0f64).prop_map(|(kind, noise_sigma)| EnvSpec { kind, noise_sigma })
}

fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
    let kernel = prop_oneof![
        (0.1..5.0f64, any::<bool>()).prop_map(|(g, bias)| KernelConfig { augment_bias: bias, ..KernelConfig::gaussian(g) }),
        any::<bool>().prop_map(|bias| KernelConfig { augment_bias: bias, ..KernelConfig::linear() }),
    ];
    let policy = prop_oneof![
        Just(PolicySpec::kernel_eps_greedy()),
        (1e-4..1e-9f64.max(1e-4) + 1e-6, 1usize..500).prop_map(|(tol, max_rank)| PolicySpec {
            solver: Solver::Incremental { tol, max_rank },
            ..PolicySpec::kernel_eps_greedy()
        }),
        any::<bool>().prop_map(PolicySpec::wls),
        (0.01..5.0f64, 0.01..5.0f64).prop_map(|(l, t)| PolicySpec::kernel_ucb(l, t)),
    ];
    (arb_env(), kernel, policy, arb_epsilon(), arb_lambda(), 4usize..60, 1usize..500, 1usize..40, any::<u64>())
        .prop_map(|(env, kernel, policy, epsilon, lambda, t0, extra, n_runs, seed)| {
            let mut cfg = ExperimentConfig::new(env, kernel, policy, ScheduleSpec { epsilon, lambda });
            cfg.t0 = t0;
            cfg.horizon = t0 + extra;
            cfg.n_runs = n_runs;
            cfg.master_seed = seed;
            cfg
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_round_trips(cfg in arb_config()) {
        let text = serialize_config(&cfg);
        let back = parse_config(&text);
        prop_assert!(back.is_ok(), "{:?}\n{}", back, text);
        prop_assert_eq!(back.unwrap(), cfg);
    }
}

fn small_config(policy: PolicySpec, seed: u64) -> ExperimentConfig {
    let env = EnvSpec::new(EnvKind::Setting1);
    let mut cfg = ExperimentConfig::new(
        env,
        KernelConfig::gaussian(1.5),
        policy,
        ScheduleSpec {
            epsilon: EpsilonSchedule::PowerLaw { beta: 0.4, scale: 1.0 },
            lambda: LambdaSchedule::FiniteDim { scale: 1.0 },
        },
    );
    cfg.horizon = 120;
    cfg.t0 = 10;
    cfg.master_seed = seed;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn traces_satisfy_regret_and_propensity_invariants(seed in any::<u64>(), which in 0usize..3) {
        let policy = [PolicySpec::kernel_eps_greedy(), PolicySpec::wls(true), PolicySpec::kernel_ucb(1.0, 1.0)][which];
        let cfg = small_config(policy, seed);
        let env = cfg.validate().unwrap();
        let mut last: Option<Learner> = None;
        let mut keep = |_: usize, l: &Learner| {
            last = Some(l.clone());
            Ok(())
        };
        let trace = simulate(&cfg, &env, None, seed, Some(&mut keep)).unwrap();

        let mut running = 0.0;
        let mut prev = 0.0;
        for s in &trace.steps {
            prop_assert!(s.inst_regret >= 0.0);
            running += s.inst_regret;
            prop_assert_eq!(s.cum_regret, running);
            prop_assert!(s.cum_regret >= prev);
            prev = s.cum_regret;
        }

        let histories: Vec<ArmHistory<f64>> = match last.unwrap() {
            Learner::Kernel(e) => (0..2).map(|a| e.history(a).clone()).collect(),
            Learner::Linear { model, .. } => (0..2).map(|a| model.history(a).clone()).collect(),
            Learner::Ucb(_) => Vec::new(),
        };
        for h in &histories {
            for (&w, &t) in h.weights().iter().zip(h.global_times()) {
                // 1/p rounds once, so the product is 1 to within one ulp.
                prop_assert!((w * trace.steps[t - 1].propensity - 1.0).abs() <= f64::EPSILON);
            }
        }
        if cfg.policy.kind == PolicyKind::KernelUcb {
            prop_assert!(trace.steps[cfg.t0..].iter().all(|s| s.propensity == 1.0));
        }
    }
}

#[test]
fn epsilon_schedules_are_non_increasing() {
    // ln(t)/√t peaks at t = e², so the simulation schedule only decreases from t = 8.
    for (spec, start) in [
        (EpsilonSchedule::PaperSim, 8),
        (EpsilonSchedule::PowerLaw { beta: 0.3, scale: 2.0 }, 1),
    ] {
        let mut prev = f64::INFINITY;
        for t in start..=100_000 {
            let e = epsilon_at(&spec, t, 2);
            assert!(e <= prev, "{spec:?} increases at t = {t}");
            prev = e;
        }
    }
}

#[test]
fn inrkhs_margin_gap_leaves_no_mass_near_boundary() {
    // f₁ − f₂ = 0.8·k(0, x) ≥ 0.8/e on [-1, 1].
    let kernel = KernelSpec::gaussian(1.0).unwrap();
    let arms = vec![
        Expansion::new(vec![0.3, 0.5], vec![vec![0.0], vec![0.0]]).unwrap(),
        Expansion::new(vec![0.3, -0.3], vec![vec![5.0], vec![5.0]]).unwrap(),
    ];
    let margin = 0.8 * (-1.0f64).exp();
    let env = make_inrkhs_environment(kernel, arms, ContextDist::Uniform { dim: 1 }, 0.1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gaps: Vec<f64> = (0..5000)
        .map(|_| {
            let x = env.sample_context(&mut rng);
            let m = env.mean_rewards(&x).unwrap();
            (m[0] - m[1]).abs()
        })
        .collect();
    let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min_gap >= margin - 1e-12);
    for l in [0.05, 0.1, margin - 1e-6] {
        assert_eq!(gaps.iter().filter(|&&g| g > 0.0 && g <= l).count(), 0);
    }
}
