//! Monte-Carlo checks of the estimator's theoretical properties.
//!
//! Every check returns a [`TheoryReport`] whose `statistic` passes when it
//! is at most `tolerance`.

use rayon::prelude::*;

use crate::cli_io::config::config_hash;
use crate::environments::{ContextDist, Expansion, RewardModel};
use crate::error::{Error, Result};
use crate::estimator::{ArmHistory, IpwkrEstimator};
use crate::harness::{
    fit_regret_exponent, loglog_fit, run_seed, simulate, stable_sum, EnvKind, EnvSpec, ExperimentConfig,
    KernelConfig, Learner, PolicyKind, PolicySpec, DEFAULT_NOISE_SIGMA,
};
use crate::kernels::KernelKind;
use crate::linalg::{symmetric_eigen, Matrix};
use crate::policy::{epsilon_at, lambda_from_inverse_sum, EpsilonSchedule, LambdaSchedule, ScheduleSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct TheoryReport {
    pub name: String,
    pub statistic: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub n_samples: usize,
    /// Master seed and the number of derived run seeds.
    pub seeds: String,
    pub config_hash: String,
    pub detail: String,
}

impl TheoryReport {
    pub fn new(name: &str, statistic: f64, tolerance: f64, n_samples: usize, cfg: &ExperimentConfig, detail: String) -> Self {
        assert!(statistic.is_finite() && tolerance.is_finite());
        Self {
            name: name.to_string(),
            statistic,
            tolerance,
            passed: statistic <= tolerance,
            n_samples,
            seeds: format!("master={};runs={n_samples}", cfg.master_seed),
            config_hash: config_hash(cfg),
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: statistic {:.6} (tolerance {:.6}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.statistic,
            self.tolerance,
            self.detail
        )
    }
}

/// `(1/t) Σ_s w_s x_s x_sᵀ` over the first `d` coordinates of an arm's
/// history.
pub fn weighted_covariance(history: &ArmHistory<f64>, t: usize, d: usize) -> Matrix<f64> {
    let mut m = Matrix::zeros(d, d);
    for (x, &w) in history.contexts().iter().zip(history.weights()) {
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] += w * x[i] * x[j];
            }
        }
    }
    let scale = 1.0 / t as f64;
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] *= scale;
        }
    }
    m
}

fn frobenius_distance(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let d = a[(i, j)] - b[(i, j)];
            s += d * d;
        }
    }
    s.sqrt()
}

/// Histories of the learner, or an error for UCB.
fn histories(learner: &Learner, n_arms: usize) -> Result<Vec<ArmHistory<f64>>> {
    match learner {
        Learner::Kernel(e) => Ok((0..n_arms).map(|a| e.history(a).clone()).collect()),
        Learner::Linear { model, .. } => Ok((0..n_arms).map(|a| model.history(a).clone()).collect()),
        Learner::Ucb(_) => Err(Error::invalid("UCB keeps no weighted history")),
    }
}

/// Averages `Σ̂_{arm,t}` over `n_mc` episodes (run seeds `run_seed(master,
/// r)`) and compares it in Frobenius norm with the analytic `E[x xᵀ]`.
pub fn check_covariance_unbiasedness(
    cfg: &ExperimentConfig,
    arm: usize,
    t: usize,
    n_mc: usize,
    tolerance: f64,
) -> Result<TheoryReport> {
    if cfg.kernel.kind != KernelKind::Linear {
        return Err(Error::invalid("covariance check needs the linear kernel"));
    }
    if !cfg.policy.kind.is_eps_greedy() {
        return Err(Error::invalid("covariance check needs an ε-greedy policy"));
    }
    if n_mc == 0 {
        return Err(Error::invalid("n_mc must be >= 1"));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.horizon = t;
    let env = run_cfg.validate()?;
    if arm >= env.n_arms() {
        return Err(Error::invalid(format!("arm {arm} out of range")));
    }
    let d = env.dim();
    let estimates = (0..n_mc as u64)
        .into_par_iter()
        .map(|r| {
            let mut hist = None;
            let mut obs = |step: usize, l: &Learner| -> Result<()> {
                if step == t {
                    hist = Some(histories(l, env.n_arms())?.swap_remove(arm));
                }
                Ok(())
            };
            simulate(&run_cfg, &env, None, run_seed(cfg.master_seed, r), Some(&mut obs))?;
            Ok(weighted_covariance(&hist.expect("observer saw step t"), t, d))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut mean = Matrix::zeros(d, d);
    let mut column = vec![0.0; n_mc];
    for i in 0..d {
        for j in 0..d {
            for (c, m) in column.iter_mut().zip(&estimates) {
                *c = m[(i, j)];
            }
            mean[(i, j)] = stable_sum(&column) / n_mc as f64;
        }
    }
    let sigma = env.context_dist().second_moment();
    let dist = frobenius_distance(&mean, &sigma);
    Ok(TheoryReport::new(
        "covariance_unbiasedness",
        dist,
        tolerance,
        n_mc,
        &run_cfg,
        format!("arm={arm} t={t} d={d} frobenius distance of mean weighted covariance to analytic second moment"),
    ))
}

/// `tr((Σ + λI)⁻¹ Σ) = Σ_j η_j / (η_j + λ)`.
pub fn effective_dimension(sigma: &Matrix<f64>, lambda: f64) -> Result<f64> {
    if sigma.rows() != sigma.cols() {
        return Err(Error::DimensionMismatch {
            expected: sigma.rows(),
            got: sigma.cols(),
        });
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
    }
    let scale = sigma.trace().abs().max(1.0);
    if !sigma.is_symmetric(1e-12 * scale) {
        return Err(Error::invalid("effective dimension needs a symmetric matrix"));
    }
    let (vals, _) = symmetric_eigen(sigma)?;
    Ok(vals.iter().map(|&v| v.max(0.0)).map(|v| v / (v + lambda)).sum())
}

/// Per-seed result of [`estimation_error_decay`].
#[derive(Clone, Debug, PartialEq)]
pub struct DecayRun {
    pub seed: u64,
    /// `‖f̂_{arm,t} − f_arm‖_H` at each checkpoint.
    pub errors: Vec<f64>,
    /// Log-log slope of the errors against `t`.
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayReport {
    pub report: TheoryReport,
    pub checkpoints: Vec<usize>,
    /// `[(1/t²) Σ_{s≤t} 1/ε_s]^{1/2}` at each checkpoint.
    pub envelope: Vec<f64>,
    pub envelope_slope: f64,
    pub median_slope: f64,
    pub runs: Vec<DecayRun>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Checkpoints `500, 1000, …, 5000`.
pub fn default_checkpoints() -> Vec<usize> {
    (1..=10).map(|i| 500 * i).collect()
}

/// Records the RKHS error of `arm` at each checkpoint over `n_seeds` runs.
///
/// At checkpoint `t` the arm is refit on its current history with `λ_t`
/// (on a copy, so the run itself is unaffected). The reported statistic is
/// `|median slope − slope of the envelope|`, both taken against `t`.
pub fn estimation_error_decay(
    cfg: &ExperimentConfig,
    arm: usize,
    checkpoints: &[usize],
    n_seeds: usize,
    tolerance: f64,
) -> Result<DecayReport> {
    if cfg.policy.kind != PolicyKind::KernelEpsGreedy {
        return Err(Error::invalid("estimation error decay needs kernel ε-greedy"));
    }
    if checkpoints.len() < 2 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("need at least two increasing checkpoints"));
    }
    if n_seeds == 0 {
        return Err(Error::invalid("n_seeds must be >= 1"));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.horizon = *checkpoints.last().expect("nonempty");
    if checkpoints[0] < run_cfg.t0 {
        return Err(Error::invalid("checkpoints must not precede the initialization phase"));
    }
    let env = run_cfg.validate()?;
    let (target_kernel, target) = match env.model() {
        RewardModel::InRkhs { kernel, expansions } => {
            let e = expansions
                .get(arm)
                .ok_or_else(|| Error::invalid(format!("arm {arm} out of range")))?;
            (*kernel, e.clone())
        }
        _ => return Err(Error::invalid("target is not a kernel expansion")),
    };
    let learner_kernel = run_cfg.kernel.spec_for(env.context_dist())?;
    if learner_kernel != target_kernel || run_cfg.kernel.augment_bias {
        return Err(Error::invalid("learner kernel must equal the target kernel"));
    }

    let n_arms = env.n_arms();
    let mut inverse_sums = Vec::with_capacity(checkpoints.len());
    let mut acc = 0.0;
    let mut next = 0;
    for t in 1..=run_cfg.horizon {
        acc += 1.0 / epsilon_at(&run_cfg.schedule.epsilon, t, n_arms);
        if t == checkpoints[next] {
            inverse_sums.push(acc);
            next += 1;
        }
    }
    let envelope: Vec<f64> = checkpoints
        .iter()
        .zip(&inverse_sums)
        .map(|(&t, &s)| (s / (t as f64 * t as f64)).sqrt())
        .collect();
    let ts: Vec<f64> = checkpoints.iter().map(|&t| t as f64).collect();
    let envelope_slope = loglog_fit(&ts, &envelope)?.slope;

    let runs = (0..n_seeds as u64)
        .into_par_iter()
        .map(|r| {
            let seed = run_seed(cfg.master_seed, r);
            let mut errors = Vec::with_capacity(checkpoints.len());
            let mut inv = 0.0;
            let mut obs = |t: usize, l: &Learner| -> Result<()> {
                inv += 1.0 / epsilon_at(&run_cfg.schedule.epsilon, t, n_arms);
                if checkpoints.binary_search(&t).is_ok() {
                    let Learner::Kernel(est) = l else {
                        unreachable!("policy checked above")
                    };
                    let lambda = lambda_from_inverse_sum(&run_cfg.schedule.lambda, t, inv)?;
                    errors.push(fresh_error(est, arm, t, lambda, &target.coeffs, &target.points)?);
                }
                Ok(())
            };
            simulate(&run_cfg, &env, None, seed, Some(&mut obs))?;
            let slope = if errors.iter().all(|e| *e > 0.0) {
                loglog_fit(&ts, &errors)?.slope
            } else {
                0.0
            };
            Ok(DecayRun { seed, errors, slope })
        })
        .collect::<Result<Vec<_>>>()?;
    let slopes: Vec<f64> = runs.iter().map(|r| r.slope).collect();
    let median_slope = median(&slopes);
    let report = TheoryReport::new(
        "estimation_error_decay",
        (median_slope - envelope_slope).abs(),
        tolerance,
        n_seeds,
        &run_cfg,
        format!(
            "arm={arm} t={}..{} median slope {median_slope:.4} envelope slope {envelope_slope:.4}",
            checkpoints[0],
            run_cfg.horizon
        ),
    );
    Ok(DecayReport {
        report,
        checkpoints: checkpoints.to_vec(),
        envelope,
        envelope_slope,
        median_slope,
        runs,
    })
}

fn fresh_error(
    est: &IpwkrEstimator<f64>,
    arm: usize,
    t: usize,
    lambda: f64,
    coeffs: &[f64],
    points: &[Vec<f64>],
) -> Result<f64> {
    let mut copy = est.clone();
    copy.fit_arm(arm, t, lambda)?;
    copy.rkhs_error_norm(arm, coeffs, points)
}

/// Expected number of non-greedy pulls, `Σ_{t=t0+1}^{T} ε_t`.
pub fn expected_exploration(cfg: &ExperimentConfig, n_arms: usize) -> f64 {
    let terms: Vec<f64> = (cfg.t0 + 1..=cfg.horizon)
        .map(|t| epsilon_at(&cfg.schedule.epsilon, t, n_arms))
        .collect();
    terms.iter().sum()
}

/// Compares the mean non-greedy pull count over `n_seeds` runs with its
/// expectation. The statistic is the gap in standard errors of the mean.
pub fn randomization_rate_check(cfg: &ExperimentConfig, n_seeds: usize, tolerance: f64) -> Result<TheoryReport> {
    if !cfg.policy.kind.is_eps_greedy() {
        return Err(Error::invalid("randomization check needs an ε-greedy policy"));
    }
    if n_seeds < 2 {
        return Err(Error::invalid("randomization check needs at least two seeds"));
    }
    let env = cfg.validate()?;
    let expected = expected_exploration(cfg, env.n_arms());
    let counts = (0..n_seeds as u64)
        .into_par_iter()
        .map(|r| {
            simulate(cfg, &env, None, run_seed(cfg.master_seed, r), None).map(|tr| tr.exploration_count() as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = n_seeds as f64;
    let mean = stable_sum(&counts) / n;
    let dev: Vec<f64> = counts.iter().map(|c| (c - mean) * (c - mean)).collect();
    let stderr = (stable_sum(&dev) / (n - 1.0)).sqrt() / n.sqrt();
    let gap = (mean - expected).abs();
    let statistic = if stderr > 0.0 {
        gap / stderr
    } else if gap == 0.0 {
        0.0
    } else {
        f64::MAX
    };
    Ok(TheoryReport::new(
        "randomization_rate",
        statistic,
        tolerance,
        n_seeds,
        cfg,
        format!("mean non-greedy pulls {mean:.3} expected {expected:.3} stderr {stderr:.3}"),
    ))
}

/// Log-log slope of the mean cumulative regret on `t ∈ [window·T, T]`,
/// reported as the distance to the band `[lo, hi]`.
pub fn regret_exponent_check(
    cfg: &ExperimentConfig,
    window: f64,
    lo: f64,
    hi: f64,
) -> Result<(TheoryReport, f64)> {
    let traces = crate::harness::run_many(cfg)?;
    let curve = crate::harness::average_traces(&traces)?;
    let fit = fit_regret_exponent(&curve.mean, window)?;
    let outside = if fit.slope < lo {
        lo - fit.slope
    } else if fit.slope > hi {
        fit.slope - hi
    } else {
        0.0
    };
    Ok((
        TheoryReport::new(
            "regret_exponent",
            outside,
            0.0,
            cfg.n_runs,
            cfg,
            format!("slope {:.4} R^2 {:.4} band [{lo}, {hi}]", fit.slope, fit.r_squared),
        ),
        fit.slope,
    ))
}

pub const COVARIANCE_TOLERANCE: f64 = 0.05;
pub const RANDOMIZATION_TOLERANCE: f64 = 5.0;
pub const DECAY_TOLERANCE: f64 = 0.3;

fn linear_target(dim: usize, arms: &[(f64, Vec<f64>)]) -> EnvSpec {
    EnvSpec {
        kind: EnvKind::InRkhs {
            context: ContextDist::Uniform { dim },
            kernel: KernelKind::Linear,
            gamma: 1.0,
            arms: arms
                .iter()
                .map(|(c, p)| Expansion {
                    coeffs: vec![*c],
                    points: vec![p.clone()],
                })
                .collect(),
        },
        noise_sigma: DEFAULT_NOISE_SIGMA,
    }
}

/// Two linear arms on `Uniform(-1, 1)²`, constant ε = 0.3, horizon 200.
pub fn covariance_config(seed: u64) -> ExperimentConfig {
    let env = linear_target(2, &[(1.0, vec![0.5, -0.25]), (1.0, vec![-0.5, 0.25])]);
    let mut cfg = ExperimentConfig::new(
        env,
        KernelConfig::linear(),
        PolicySpec::kernel_eps_greedy(),
        ScheduleSpec {
            epsilon: EpsilonSchedule::Constant(0.3),
            lambda: LambdaSchedule::FiniteDim { scale: 1.0 },
        },
    );
    cfg.horizon = 200;
    cfg.t0 = 10;
    cfg.n_runs = 1;
    cfg.master_seed = seed;
    cfg
}

/// Setting 1 with a linear-kernel learner, constant ε = 0.3, `t0 = L = 2`
/// and 1000 ε-greedy steps.
pub fn randomization_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        EnvSpec::new(EnvKind::Setting1),
        KernelConfig::linear(),
        PolicySpec::kernel_eps_greedy(),
        ScheduleSpec {
            epsilon: EpsilonSchedule::Constant(0.3),
            lambda: LambdaSchedule::FiniteDim { scale: 1.0 },
        },
    );
    cfg.t0 = 2;
    cfg.horizon = 1002;
    cfg.n_runs = 1;
    cfg.master_seed = seed;
    cfg
}

/// Two-arm Gaussian-kernel target on `Uniform(-1, 1)`, learner with the
/// same kernel, constant ε and the finite-dimensional λ schedule.
pub fn decay_config(seed: u64) -> ExperimentConfig {
    let gamma = 1.0;
    let env = EnvSpec {
        kind: EnvKind::InRkhs {
            context: ContextDist::Uniform { dim: 1 },
            kernel: KernelKind::Gaussian,
            gamma,
            arms: vec![
                Expansion {
                    coeffs: vec![1.0, -0.8, 0.5],
                    points: vec![vec![-0.6], vec![0.1], vec![0.7]],
                },
                Expansion {
                    coeffs: vec![0.6, 0.4],
                    points: vec![vec![-0.2], vec![0.5]],
                },
            ],
        },
        noise_sigma: DEFAULT_NOISE_SIGMA,
    };
    let mut cfg = ExperimentConfig::new(
        env,
        KernelConfig::gaussian(gamma),
        PolicySpec::kernel_eps_greedy(),
        ScheduleSpec {
            epsilon: EpsilonSchedule::Constant(0.3),
            lambda: LambdaSchedule::FiniteDim { scale: 1.0 },
        },
    );
    cfg.horizon = 5000;
    cfg.t0 = 50;
    cfg.n_runs = 1;
    cfg.master_seed = seed;
    cfg
}
