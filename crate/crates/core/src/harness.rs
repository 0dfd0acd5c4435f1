//! Experiment execution: episodes, multi-seed averaging, cross-validation and
//! regret-exponent fitting.
//!
//! # Random streams
//!
//! A run with index `r` under master seed `m` uses the seed
//! `splitmix64(m ^ splitmix64(r))`. Each run seeds a ChaCha8 generator with
//! it and splits three independent streams (`set_stream`): contexts (1),
//! reward noise (2) and policy randomization (3). Policies that make the
//! same decisions therefore see identical contexts and noise.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{KernelUcb, WeightedLinear};
use crate::environments::{make_inrkhs_environment, ContextDist, Environment, Expansion};
use crate::error::{Error, Result};
use crate::estimator::{IpwkrEstimator, Solver};
use crate::kernels::{augment_bias, KernelKind, KernelSpec};
use crate::policy::{
    epsilon_at, lambda_from_inverse_sum, select_arm, EpsilonSchedule, LambdaSchedule, ScheduleSpec,
};

pub const STREAM_CONTEXTS: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_POLICY: u64 = 3;

/// Run index used for the cross-validation context pool.
pub const CV_CONTEXT_RUN: u64 = u64::MAX;
/// XOR-ed into the master seed for cross-validation evaluation repetitions.
pub const CV_EVAL_TAG: u64 = 0xC0FF_EE00_0000_0001;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn run_seed(master_seed: u64, run_index: u64) -> u64 {
    splitmix64(master_seed ^ splitmix64(run_index))
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnvKind {
    Setting1,
    Setting2,
    /// `x*` / `w*` default to draws from the master seed.
    Setting3 {
        x_star: Option<Vec<f64>>,
        w_star: Option<Vec<f64>>,
    },
    Setting4,
    InRkhs {
        context: ContextDist,
        kernel: KernelKind,
        gamma: f64,
        arms: Vec<Expansion>,
    },
    Constant {
        context: ContextDist,
        means: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub noise_sigma: f64,
}

pub const DEFAULT_NOISE_SIGMA: f64 = 0.5;
pub const SETTING3_DIM: usize = 3;

impl EnvSpec {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            noise_sigma: DEFAULT_NOISE_SIGMA,
        }
    }

    /// Setting 3 parameters actually used under `master_seed`.
    pub fn setting3_parameters(&self, master_seed: u64) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            EnvKind::Setting3 { x_star, w_star } => {
                let (gx, gw) = Environment::setting3_parameters(master_seed, SETTING3_DIM);
                Some((
                    x_star.clone().unwrap_or(gx),
                    w_star.clone().unwrap_or(gw),
                ))
            }
            _ => None,
        }
    }

    pub fn build(&self, master_seed: u64) -> Result<Environment> {
        let sigma = self.noise_sigma;
        match &self.kind {
            EnvKind::Setting1 => Environment::setting1(sigma),
            EnvKind::Setting2 => Environment::setting2(sigma),
            EnvKind::Setting3 { .. } => {
                let (x, w) = self.setting3_parameters(master_seed).expect("setting 3");
                Environment::setting3(x, w, sigma)
            }
            EnvKind::Setting4 => Environment::setting4(sigma),
            EnvKind::InRkhs {
                context,
                kernel,
                gamma,
                arms,
            } => {
                let k = match kernel {
                    KernelKind::Gaussian => KernelSpec::gaussian(*gamma)?,
                    KernelKind::Linear => KernelSpec::linear_on_box(context.bound(), context.dim())?,
                };
                make_inrkhs_environment(k, arms.clone(), *context, sigma)
            }
            EnvKind::Constant { context, means } => Environment::constant(means.clone(), *context, sigma),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub gamma: f64,
    /// Append a constant-1 coordinate to contexts before learning.
    pub augment_bias: bool,
}

impl KernelConfig {
    pub fn gaussian(gamma: f64) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            gamma,
            augment_bias: false,
        }
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            gamma: 1.0,
            augment_bias: false,
        }
    }

    /// Kernel on the learner's feature space for contexts drawn from `dist`.
    /// For the linear kernel, `kappa` is the squared norm bound of the box
    /// support (plus one for the bias coordinate).
    pub fn spec_for(&self, dist: ContextDist) -> Result<KernelSpec<f64>> {
        match self.kind {
            KernelKind::Gaussian => KernelSpec::gaussian(self.gamma),
            KernelKind::Linear => {
                let b = dist.bound();
                let extra = if self.augment_bias { 1.0 } else { 0.0 };
                KernelSpec::linear(b * b * dist.dim() as f64 + extra)
            }
        }
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        if self.augment_bias {
            augment_bias(x)
        } else {
            x.to_vec()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyKind {
    KernelEpsGreedy,
    KernelUcb,
    WlsEpsGreedy,
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::KernelEpsGreedy => "kernel_eps_greedy",
            PolicyKind::KernelUcb => "kernel_ucb",
            PolicyKind::WlsEpsGreedy => "wls_eps_greedy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "kernel_eps_greedy" => Some(PolicyKind::KernelEpsGreedy),
            "kernel_ucb" => Some(PolicyKind::KernelUcb),
            "wls_eps_greedy" => Some(PolicyKind::WlsEpsGreedy),
            _ => None,
        }
    }

    pub fn is_eps_greedy(&self) -> bool {
        !matches!(self, PolicyKind::KernelUcb)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Kernel ε-greedy refit strategy.
    pub solver: Solver,
    /// Weighted linear ε-greedy: ridge term from the λ schedule (true) or
    /// pseudo-inverse least squares (false).
    pub ridge: bool,
    /// Kernel UCB time-constant regularization.
    pub ucb_lambda: f64,
    /// Kernel UCB exploration multiplier.
    pub tau: f64,
}

pub const DEFAULT_UCB_LAMBDA: f64 = 1.0;
pub const DEFAULT_UCB_TAU: f64 = 1.0;

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            solver: Solver::default(),
            ridge: false,
            ucb_lambda: DEFAULT_UCB_LAMBDA,
            tau: DEFAULT_UCB_TAU,
        }
    }

    pub fn kernel_eps_greedy() -> Self {
        Self::new(PolicyKind::KernelEpsGreedy)
    }

    pub fn kernel_ucb(ucb_lambda: f64, tau: f64) -> Self {
        Self {
            ucb_lambda,
            tau,
            ..Self::new(PolicyKind::KernelUcb)
        }
    }

    pub fn wls(ridge: bool) -> Self {
        Self {
            ridge,
            ..Self::new(PolicyKind::WlsEpsGreedy)
        }
    }

    /// Short label used in plot data and summaries.
    pub fn label(&self) -> String {
        match self.kind {
            PolicyKind::WlsEpsGreedy if self.ridge => "wls_eps_greedy_ridge".to_string(),
            k => k.name().to_string(),
        }
    }
}

pub const DEFAULT_HORIZON: usize = 1000;
pub const DEFAULT_T0: usize = 50;
pub const DEFAULT_N_RUNS: usize = 25;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub kernel: KernelConfig,
    pub policy: PolicySpec,
    pub schedule: ScheduleSpec<f64>,
    pub horizon: usize,
    pub t0: usize,
    pub n_runs: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, kernel: KernelConfig, policy: PolicySpec, schedule: ScheduleSpec<f64>) -> Self {
        Self {
            env,
            kernel,
            policy,
            schedule,
            horizon: DEFAULT_HORIZON,
            t0: DEFAULT_T0,
            n_runs: DEFAULT_N_RUNS,
            master_seed: 0,
        }
    }

    /// Checks every cross-field constraint; the error names the offending
    /// key as `section.key`.
    pub fn validate(&self) -> Result<Environment> {
        let env = self
            .env
            .build(self.master_seed)
            .map_err(|e| Error::config("environment", e.to_string()))?;
        let l = env.n_arms();
        if self.t0 < l {
            return Err(Error::config(
                "run.t0",
                format!("t0 = {} is smaller than the number of arms {l}", self.t0),
            ));
        }
        if self.horizon <= self.t0 {
            return Err(Error::config(
                "run.T",
                format!("T = {} must exceed t0 = {}", self.horizon, self.t0),
            ));
        }
        if self.n_runs == 0 {
            return Err(Error::config("run.n_runs", "n_runs must be >= 1"));
        }
        if self.kernel.kind == KernelKind::Gaussian && !(self.kernel.gamma > 0.0) {
            return Err(Error::config("kernel.gamma", "gamma must be > 0"));
        }
        self.kernel
            .spec_for(env.context_dist())
            .map_err(|e| Error::config("kernel", e.to_string()))?;
        match self.policy.kind {
            PolicyKind::KernelUcb => {
                if !(self.policy.ucb_lambda > 0.0) {
                    return Err(Error::config("policy.lambda", "UCB lambda must be > 0"));
                }
                if !(self.policy.tau >= 0.0) {
                    return Err(Error::config("policy.tau", "tau must be >= 0"));
                }
            }
            _ => {
                self.schedule
                    .epsilon
                    .validate()
                    .map_err(|e| Error::config("schedule.epsilon", e.to_string()))?;
                self.schedule
                    .lambda
                    .validate()
                    .map_err(|e| Error::config("schedule.lambda", e.to_string()))?;
                if self.schedule.lambda.uses_epsilon() {
                    if let EpsilonSchedule::Constant(e) = self.schedule.epsilon {
                        if e <= 0.0 {
                            return Err(Error::config(
                                "schedule.epsilon_value",
                                "a history-dependent lambda schedule needs epsilon > 0",
                            ));
                        }
                    }
                }
            }
        }
        Ok(env)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub context: Vec<f64>,
    pub chosen_arm: usize,
    pub optimal_arm: usize,
    /// `None` during initialization.
    pub greedy_arm: Option<usize>,
    /// `None` during initialization and for UCB.
    pub epsilon: Option<f64>,
    pub propensity: f64,
    pub reward: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    /// λ used to refit the pulled arm at this step, if any.
    pub lambda: Option<f64>,
}

impl StepRecord {
    pub fn explored(&self) -> bool {
        matches!(self.greedy_arm, Some(g) if g != self.chosen_arm)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegretTrace {
    pub seed: u64,
    pub config_hash: String,
    pub steps: Vec<StepRecord>,
}

impl RegretTrace {
    pub fn cumulative(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cum_regret).collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.cum_regret)
    }

    /// Number of ε-greedy steps where the pulled arm was not the greedy arm.
    pub fn exploration_count(&self) -> usize {
        self.steps.iter().filter(|s| s.explored()).count()
    }
}

/// The per-run learning state behind a policy.
#[derive(Clone, Debug)]
pub enum Learner {
    Kernel(IpwkrEstimator<f64>),
    Linear {
        model: WeightedLinear<f64>,
        ridge: bool,
    },
    Ucb(KernelUcb<f64>),
}

impl Learner {
    fn new(cfg: &ExperimentConfig, env: &Environment) -> Result<Self> {
        let l = env.n_arms();
        let kernel = cfg.kernel.spec_for(env.context_dist())?;
        Ok(match cfg.policy.kind {
            PolicyKind::KernelEpsGreedy => Learner::Kernel(IpwkrEstimator::new(kernel, l, cfg.policy.solver)),
            PolicyKind::WlsEpsGreedy => Learner::Linear {
                model: WeightedLinear::new(l),
                ridge: cfg.policy.ridge,
            },
            PolicyKind::KernelUcb => Learner::Ucb(KernelUcb::new(kernel, cfg.policy.ucb_lambda, cfg.policy.tau, l)?),
        })
    }

    fn record(&mut self, arm: usize, x: Vec<f64>, y: f64, propensity: f64, t: usize) -> Result<()> {
        match self {
            Learner::Kernel(e) => e.record_observation(arm, x, y, propensity, t),
            Learner::Linear { model, .. } => model.record_observation(arm, x, y, propensity, t),
            Learner::Ucb(u) => u.observe(arm, x, y),
        }
    }

    fn needs_lambda(&self) -> bool {
        match self {
            Learner::Kernel(_) => true,
            Learner::Linear { ridge, .. } => *ridge,
            Learner::Ucb(_) => false,
        }
    }

    fn refit(&mut self, arm: usize, t: usize, lambda: Option<f64>) -> Result<()> {
        match self {
            Learner::Kernel(e) => {
                e.fit_arm(arm, t, lambda.expect("kernel refit needs lambda"))?;
            }
            Learner::Linear { model, ridge } => {
                model.fit_arm(arm, t, if *ridge { lambda } else { None })?;
            }
            Learner::Ucb(_) => {}
        }
        Ok(())
    }

    fn estimates(&self, x: &[f64], n_arms: usize) -> Result<Vec<f64>> {
        (0..n_arms)
            .map(|a| match self {
                Learner::Kernel(e) => e.predict_or_zero(a, x),
                Learner::Linear { model, .. } => Ok(model.predict_or_zero(a, x)),
                Learner::Ucb(u) => u.ucb_score(a, x),
            })
            .collect()
    }

    /// Stored weight of the most recent observation of `arm`.
    fn last_weight(&self, arm: usize) -> Option<f64> {
        match self {
            Learner::Kernel(e) => e.history(arm).weights().last().copied(),
            Learner::Linear { model, .. } => model.history(arm).weights().last().copied(),
            Learner::Ucb(_) => None,
        }
    }
}

/// Callback invoked after every step with the step index and learner state.
pub type Observer<'a> = dyn FnMut(usize, &Learner) -> Result<()> + 'a;

pub fn run_episode(cfg: &ExperimentConfig, seed: u64) -> Result<RegretTrace> {
    let env = cfg.validate()?;
    simulate(cfg, &env, None, seed, None)
}

/// Runs one episode. `contexts`, if given, replaces context sampling (its
/// length must be at least `cfg.horizon`).
pub fn simulate(
    cfg: &ExperimentConfig,
    env: &Environment,
    contexts: Option<&[Vec<f64>]>,
    seed: u64,
    mut observer: Option<&mut Observer<'_>>,
) -> Result<RegretTrace> {
    let n_arms = env.n_arms();
    if let Some(c) = contexts {
        if c.len() < cfg.horizon {
            return Err(Error::invalid(format!(
                "{} contexts supplied for horizon {}",
                c.len(),
                cfg.horizon
            )));
        }
    }
    let mut ctx_rng = stream_rng(seed, STREAM_CONTEXTS);
    let mut noise_rng = stream_rng(seed, STREAM_NOISE);
    let mut policy_rng = stream_rng(seed, STREAM_POLICY);

    let mut learner = Learner::new(cfg, env)?;
    let eps_greedy = cfg.policy.kind.is_eps_greedy();

    // Balanced initialization: ⌊t0/L⌋ pulls per arm, the remainder going to
    // the lowest arms, in shuffled order.
    let mut init_arms: Vec<usize> = (0..cfg.t0).map(|s| s % n_arms).collect();
    init_arms.shuffle(&mut policy_rng);
    let init_propensity = 1.0 / n_arms as f64;

    let mut steps = Vec::with_capacity(cfg.horizon);
    let mut cum = 0.0;
    let mut inverse_eps_sum = 0.0;

    for t in 1..=cfg.horizon {
        let x = match contexts {
            Some(c) => c[t - 1].clone(),
            None => env.sample_context(&mut ctx_rng),
        };
        let features = cfg.kernel.features(&x);
        let means = env.mean_rewards(&x)?;
        let optimal_arm = crate::policy::argmax(&means);
        let eps_t = if eps_greedy {
            epsilon_at(&cfg.schedule.epsilon, t, n_arms)
        } else {
            0.0
        };
        if eps_greedy && cfg.schedule.lambda.uses_epsilon() {
            inverse_eps_sum += 1.0 / eps_t;
        }

        let (chosen, greedy, epsilon, propensity) = if t <= cfg.t0 {
            (init_arms[t - 1], None, None, init_propensity)
        } else if eps_greedy {
            let estimates = learner.estimates(&features, n_arms)?;
            let d = select_arm(&estimates, eps_t, &mut policy_rng)?;
            let p = d.chosen_propensity();
            (d.chosen_arm, Some(d.greedy_arm), Some(eps_t), p)
        } else {
            let scores = learner.estimates(&features, n_arms)?;
            let a = crate::policy::argmax(&scores);
            (a, Some(a), None, 1.0)
        };

        let z: f64 = noise_rng.sample(rand_distr::StandardNormal);
        let reward = means[chosen] + env.noise_sigma() * z;
        learner.record(chosen, features, reward, propensity, t)?;
        if let Some(w) = learner.last_weight(chosen) {
            assert!(
                (w * propensity - 1.0).abs() <= 2.0 * f64::EPSILON,
                "weight {w} does not invert propensity {propensity}"
            );
        }

        let lambda = if learner.needs_lambda() && t >= cfg.t0 {
            Some(lambda_from_inverse_sum(&cfg.schedule.lambda, t, inverse_eps_sum)?)
        } else {
            None
        };
        if t == cfg.t0 {
            for arm in 0..n_arms {
                learner.refit(arm, t, lambda)?;
            }
        } else if t > cfg.t0 {
            learner.refit(chosen, t, lambda)?;
        }

        let inst = means[optimal_arm] - means[chosen];
        assert!(inst >= 0.0, "negative instantaneous regret {inst}");
        cum += inst;
        steps.push(StepRecord {
            t,
            context: x,
            chosen_arm: chosen,
            optimal_arm,
            greedy_arm: greedy,
            epsilon,
            propensity,
            reward,
            inst_regret: inst,
            cum_regret: cum,
            lambda: if t >= cfg.t0 { lambda } else { None },
        });
        if let Some(obs) = observer.as_mut() {
            obs(t, &learner)?;
        }
    }

    Ok(RegretTrace {
        seed,
        config_hash: crate::cli_io::config::config_hash(cfg),
        steps,
    })
}

/// Runs `cfg.n_runs` episodes on the current rayon pool; run `r` uses
/// [`run_seed`]`(master_seed, r)`. Output order follows the run index.
pub fn run_many(cfg: &ExperimentConfig) -> Result<Vec<RegretTrace>> {
    let env = cfg.validate()?;
    (0..cfg.n_runs as u64)
        .into_par_iter()
        .map(|r| simulate(cfg, &env, None, run_seed(cfg.master_seed, r), None))
        .collect()
}

/// Sum of the values in ascending order, so the result does not depend on
/// the order results arrived in.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegretCurve {
    /// Entry `i` belongs to step `t = i + 1`.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_runs: usize,
}

/// Pointwise mean and standard error (sample standard deviation over
/// `sqrt(n)`; zero for a single trace) of cumulative regret.
pub fn average_traces(traces: &[RegretTrace]) -> Result<RegretCurve> {
    let first = traces
        .first()
        .ok_or_else(|| Error::invalid("cannot average an empty set of traces"))?;
    let horizon = first.steps.len();
    if traces.iter().any(|tr| tr.steps.len() != horizon) {
        return Err(Error::invalid("traces have different horizons"));
    }
    let n = traces.len();
    let mut mean = Vec::with_capacity(horizon);
    let mut stderr = Vec::with_capacity(horizon);
    let mut column = vec![0.0; n];
    for i in 0..horizon {
        for (c, tr) in column.iter_mut().zip(traces) {
            *c = tr.steps[i].cum_regret;
        }
        let m = stable_sum(&column) / n as f64;
        let se = if n > 1 {
            let dev: Vec<f64> = column.iter().map(|v| (v - m) * (v - m)).collect();
            (stable_sum(&dev) / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        stderr.push(se);
    }
    Ok(RegretCurve {
        mean,
        stderr,
        n_runs: n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(ln t, ln y)` for the given points.
pub fn loglog_fit(ts: &[f64], ys: &[f64]) -> Result<ExponentFit> {
    if ts.len() != ys.len() || ts.len() < 2 {
        return Err(Error::invalid("log-log fit needs at least two paired points"));
    }
    if let Some(v) = ys.iter().chain(ts).find(|v| !(**v > 0.0)) {
        return Err(Error::invalid(format!("log-log fit needs positive values, found {v}")));
    }
    let lx: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::invalid("log-log fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ExponentFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Fits `ln R_t = a + b ln t` over `t ∈ [⌈window·T⌉, T]`, where `curve[i]`
/// is `R_{i+1}`.
pub fn fit_regret_exponent(curve: &[f64], window: f64) -> Result<ExponentFit> {
    if !(window > 0.0 && window < 1.0) {
        return Err(Error::invalid(format!("window must lie in (0, 1), got {window}")));
    }
    let horizon = curve.len();
    let start = ((window * horizon as f64).ceil() as usize).max(1);
    let ts: Vec<f64> = (start..=horizon).map(|t| t as f64).collect();
    let ys: Vec<f64> = curve[start - 1..].to_vec();
    if let Some((i, v)) = ys.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::invalid(format!(
            "regret curve must be positive on the window, R_{} = {v}",
            start + i
        )));
    }
    loglog_fit(&ts, &ys)
}

/// One parameter combination from a cross-validation grid. `None` leaves
/// the base configuration's value in place.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CvTuple {
    pub lambda: Option<LambdaSchedule<f64>>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
}

impl CvTuple {
    pub fn apply(&self, base: &ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        if let Some(g) = self.gamma {
            cfg.kernel.gamma = g;
        }
        if let Some(l) = self.lambda {
            match cfg.policy.kind {
                PolicyKind::KernelUcb => match l {
                    LambdaSchedule::Fixed(v) => cfg.policy.ucb_lambda = v,
                    _ => {
                        return Err(Error::config(
                            "cv.lambdas",
                            "kernel UCB takes only fixed lambda values",
                        ))
                    }
                },
                _ => cfg.schedule.lambda = l,
            }
        }
        if let Some(tau) = self.tau {
            if cfg.policy.kind != PolicyKind::KernelUcb {
                return Err(Error::config("cv.taus", "tau is only a kernel UCB parameter"));
            }
            cfg.policy.tau = tau;
        }
        Ok(cfg)
    }

    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(l) = self.lambda {
            parts.push(format!("lambda={}", describe_lambda(&l)));
        }
        if let Some(g) = self.gamma {
            parts.push(format!("gamma={g}"));
        }
        if let Some(t) = self.tau {
            parts.push(format!("tau={t}"));
        }
        if parts.is_empty() {
            "base".to_string()
        } else {
            parts.join(" ")
        }
    }
}

pub fn describe_lambda(l: &LambdaSchedule<f64>) -> String {
    match *l {
        LambdaSchedule::FiniteDim { scale } => format!("finite_dim(scale={scale})"),
        LambdaSchedule::InfiniteDim {
            alpha,
            source,
            delta,
            scale,
        } => format!("infinite_dim(alpha={alpha},source={source},delta={delta},scale={scale})"),
        LambdaSchedule::Fixed(v) => format!("{v}"),
        LambdaSchedule::LogPower { power, scale } => {
            if scale == 1.0 {
                format!("t^-{power}/sqrt(ln t)")
            } else {
                format!("{scale}*t^-{power}/sqrt(ln t)")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvGrid {
    pub lambdas: Vec<LambdaSchedule<f64>>,
    pub gammas: Vec<f64>,
    pub taus: Vec<f64>,
}

fn arithmetic(start: f64, step: f64, end: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n)
        .map(|i| ((start + step * i as f64) * 1e9).round() / 1e9)
        .collect();
    if (v.last().copied().unwrap_or(f64::NAN) - end).abs() > 1e-9 {
        v.push(end);
    }
    v
}

impl CvGrid {
    /// λ_t and γ grids for kernel ε-greedy.
    pub fn default_eps_greedy() -> Self {
        let mut lambdas: Vec<LambdaSchedule<f64>> = [0.5, 0.25, 1.0 / 6.0, 0.125, 0.0625]
            .iter()
            .map(|&power| LambdaSchedule::LogPower { power, scale: 1.0 })
            .collect();
        lambdas.extend([5e-5, 0.005, 0.5].map(LambdaSchedule::Fixed));
        Self {
            lambdas,
            gammas: arithmetic(0.1, 0.2, 5.0),
            taus: Vec::new(),
        }
    }

    /// λ, γ and τ grids for kernel UCB.
    pub fn default_ucb() -> Self {
        Self {
            lambdas: arithmetic(0.05, 0.1, 5.0)
                .into_iter()
                .map(LambdaSchedule::Fixed)
                .collect(),
            gammas: arithmetic(0.5, 1.0, 15.0),
            taus: arithmetic(0.05, 0.05, 0.9),
        }
    }

    /// All combinations, λ outermost and τ innermost.
    pub fn tuples(&self) -> Vec<CvTuple> {
        fn opts<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for lambda in opts(&self.lambdas) {
            for gamma in opts(&self.gammas) {
                for tau in opts(&self.taus) {
                    out.push(CvTuple { lambda, gamma, tau });
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvRow {
    pub tuple: CvTuple,
    /// Final cumulative regret on each training fold.
    pub fold_regret: Vec<f64>,
    pub mean_regret: f64,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub rows: Vec<CvRow>,
    pub best_index: usize,
    pub best: CvTuple,
    pub best_config: ExperimentConfig,
    /// Evaluation repetitions of the winner on the held-out fold.
    pub evaluation: Vec<RegretTrace>,
}

/// Context pool of `T (k + 1)` draws: folds `0..k` train, fold `k` tests.
pub fn cv_context_folds(cfg: &ExperimentConfig, env: &Environment, k: usize) -> Vec<Vec<Vec<f64>>> {
    let mut rng = stream_rng(run_seed(cfg.master_seed, CV_CONTEXT_RUN), STREAM_CONTEXTS);
    (0..=k)
        .map(|_| (0..cfg.horizon).map(|_| env.sample_context(&mut rng)).collect())
        .collect()
}

/// k-fold selection of policy parameters followed by `eval_runs`
/// repetitions of the winner on the held-out fold.
///
/// Every tuple sees the same fold contexts and, on fold `f`, the same run
/// seed `run_seed(master, f)`. The tuple with the smallest mean final regret
/// wins; ties keep the earlier tuple. Evaluation repetition `r` uses
/// `run_seed(master ^ CV_EVAL_TAG, r)`.
pub fn cross_validate(base: &ExperimentConfig, grid: &CvGrid, k: usize, eval_runs: usize) -> Result<CvOutcome> {
    if k < 2 {
        return Err(Error::config("cv.k", format!("k must be >= 2, got {k}")));
    }
    if eval_runs == 0 {
        return Err(Error::config("cv.eval_runs", "need at least one evaluation run"));
    }
    let tuples = grid.tuples();
    let configs = tuples
        .iter()
        .map(|tu| {
            let c = tu.apply(base)?;
            c.validate()?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let env = base.validate()?;
    let folds = cv_context_folds(base, &env, k);

    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|i| (0..k).map(move |f| (i, f)))
        .collect();
    let finals = jobs
        .par_iter()
        .map(|&(i, f)| {
            simulate(&configs[i], &env, Some(&folds[f]), run_seed(base.master_seed, f as u64), None)
                .map(|tr| tr.final_regret())
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut rows = Vec::with_capacity(tuples.len());
    for (i, tuple) in tuples.iter().enumerate() {
        let fold_regret = finals[i * k..(i + 1) * k].to_vec();
        let mean_regret = stable_sum(&fold_regret) / k as f64;
        rows.push(CvRow {
            tuple: *tuple,
            fold_regret,
            mean_regret,
        });
    }
    let mut best_index = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.mean_regret < rows[best_index].mean_regret {
            best_index = i;
        }
    }
    let best_config = configs[best_index].clone();
    let test = &folds[k];
    let evaluation = (0..eval_runs as u64)
        .into_par_iter()
        .map(|r| simulate(&best_config, &env, Some(test), run_seed(base.master_seed ^ CV_EVAL_TAG, r), None))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvOutcome {
        best: rows[best_index].tuple,
        rows,
        best_index,
        best_config,
        evaluation,
    })
}

/// Runs `cfg` on fixed contexts with the evaluation seeds used by
/// [`cross_validate`], so other policies can be compared on the same fold.
pub fn evaluate_on_contexts(
    cfg: &ExperimentConfig,
    contexts: &[Vec<f64>],
    eval_runs: usize,
) -> Result<Vec<RegretTrace>> {
    let env = cfg.validate()?;
    (0..eval_runs as u64)
        .into_par_iter()
        .map(|r| simulate(cfg, &env, Some(contexts), run_seed(cfg.master_seed ^ CV_EVAL_TAG, r), None))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_cfg() -> ExperimentConfig {
        let env = EnvSpec {
            kind: EnvKind::Constant {
                context: ContextDist::Uniform { dim: 1 },
                means: vec![1.0, 0.0],
            },
            noise_sigma: 0.0,
        };
        let mut cfg = ExperimentConfig::new(
            env,
            KernelConfig::gaussian(1.0),
            PolicySpec::kernel_eps_greedy(),
            ScheduleSpec {
                epsilon: EpsilonSchedule::Constant(0.0),
                lambda: LambdaSchedule::Fixed(0.1),
            },
        );
        cfg.horizon = 60;
        cfg.t0 = 4;
        cfg.n_runs = 2;
        cfg
    }

    #[test]
    fn greedy_on_separated_constants_has_no_regret_after_init() {
        let cfg = constant_cfg();
        let tr = run_episode(&cfg, 7).unwrap();
        let init_regret = tr.steps[cfg.t0 - 1].cum_regret;
        assert_eq!(init_regret, 2.0); // arm 1 pulled twice in init
        for s in &tr.steps[cfg.t0..] {
            assert_eq!(s.inst_regret, 0.0);
            assert_eq!(s.chosen_arm, 0);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let mut cfg = constant_cfg();
        cfg.env.noise_sigma = 0.5;
        cfg.schedule.epsilon = EpsilonSchedule::PaperSim;
        assert_eq!(run_episode(&cfg, 3).unwrap(), run_episode(&cfg, 3).unwrap());
        assert_ne!(run_episode(&cfg, 3).unwrap(), run_episode(&cfg, 4).unwrap());
    }

    #[test]
    fn trace_invariants() {
        let mut cfg = constant_cfg();
        cfg.env = EnvSpec::new(EnvKind::Setting1);
        cfg.schedule = ScheduleSpec {
            epsilon: EpsilonSchedule::PaperSim,
            lambda: LambdaSchedule::FiniteDim { scale: 1.0 },
        };
        cfg.horizon = 200;
        let tr = run_episode(&cfg, 1).unwrap();
        let mut sum = 0.0;
        for (i, s) in tr.steps.iter().enumerate() {
            assert_eq!(s.t, i + 1);
            assert!(s.inst_regret >= 0.0);
            sum += s.inst_regret;
            assert_eq!(s.cum_regret, sum);
        }
    }

    #[test]
    fn validation_names_keys() {
        let mut cfg = constant_cfg();
        cfg.t0 = 1;
        match cfg.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "run.t0"),
            other => panic!("{other:?}"),
        }
        let mut cfg = constant_cfg();
        cfg.horizon = cfg.t0;
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        let mut cfg = constant_cfg();
        cfg.schedule.lambda = LambdaSchedule::FiniteDim { scale: 1.0 };
        match cfg.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "schedule.epsilon_value"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn average_single_and_pair() {
        let cfg = constant_cfg();
        let a = run_episode(&cfg, 1).unwrap();
        let single = average_traces(std::slice::from_ref(&a)).unwrap();
        assert_eq!(single.mean, a.cumulative());
        assert!(single.stderr.iter().all(|&s| s == 0.0));

        let mut b = a.clone();
        for s in &mut b.steps {
            s.cum_regret += 2.0;
        }
        let pair = average_traces(&[a.clone(), b]).unwrap();
        for (m, v) in pair.mean.iter().zip(a.cumulative()) {
            assert!((m - (v + 1.0)).abs() < 1e-12);
        }
        assert!(average_traces(&[]).is_err());
    }

    #[test]
    fn exponent_of_exact_power_law() {
        let c: Vec<f64> = (1..=1000).map(|t| (t as f64).powf(2.0 / 3.0)).collect();
        let f = fit_regret_exponent(&c, 0.5).unwrap();
        assert!((f.slope - 2.0 / 3.0).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let lin: Vec<f64> = (1..=1000).map(|t| 3.0 * t as f64).collect();
        assert!((fit_regret_exponent(&lin, 0.5).unwrap().slope - 1.0).abs() < 1e-12);
        let mut bad = c.clone();
        bad[999] = 0.0;
        assert!(fit_regret_exponent(&bad, 0.5).is_err());
    }

    #[test]
    fn default_grids() {
        let g = CvGrid::default_eps_greedy();
        assert_eq!(g.lambdas.len(), 8);
        assert_eq!(g.gammas.first(), Some(&0.1));
        assert_eq!(g.gammas.last(), Some(&5.0));
        assert!((g.gammas[1] - 0.3).abs() < 1e-12);
        let u = CvGrid::default_ucb();
        assert_eq!(u.taus.len(), 18);
        assert_eq!(u.taus.last(), Some(&0.9));
        assert_eq!(u.gammas.first(), Some(&0.5));
        assert_eq!(u.gammas.last(), Some(&15.0));
        assert_eq!(u.lambdas.first(), Some(&LambdaSchedule::Fixed(0.05)));
        assert_eq!(u.lambdas.last(), Some(&LambdaSchedule::Fixed(5.0)));
    }

    #[test]
    fn seeds_differ_per_run() {
        let a = run_seed(1, 0);
        let b = run_seed(1, 1);
        let c = run_seed(2, 0);
        assert!(a != b && a != c && b != c);
    }
}
