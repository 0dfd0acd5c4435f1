//! Line-oriented `key = value` configuration format.
//!
//! ```text
//! # comment
//! [section]
//! key = value
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Keys are unique per
//! section and must appear below a section header. Lists are comma
//! separated; point lists separate points with `;` and coordinates with `,`.
//! Numbers use Rust's float syntax (`0.5`, `1e-12`). Unknown sections and
//! keys are errors. The full key reference is in the repository README.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::environments::{ContextDist, Expansion};
use crate::error::{Error, Result};
use crate::estimator::{FitMethod, Solver};
use crate::harness::{
    describe_lambda, CvGrid, EnvKind, EnvSpec, ExperimentConfig, KernelConfig, PolicyKind, PolicySpec,
    DEFAULT_HORIZON, DEFAULT_N_RUNS, DEFAULT_NOISE_SIGMA, DEFAULT_T0, DEFAULT_UCB_LAMBDA, DEFAULT_UCB_TAU,
};
use crate::kernels::KernelKind;
use crate::policy::{EpsilonSchedule, LambdaSchedule, ScheduleSpec};

pub const SECTIONS: [&str; 6] = ["environment", "kernel", "policy", "schedule", "run", "cv"];

pub const DEFAULT_CV_K: usize = 10;
pub const DEFAULT_CV_EVAL_RUNS: usize = 25;

/// Cross-validation settings from the optional `[cv]` section.
#[derive(Clone, Debug, PartialEq)]
pub struct CvSettings {
    pub k: usize,
    pub eval_runs: usize,
    pub grid: CvGrid,
}

impl CvSettings {
    /// Grids used when a config has no `[cv]` section.
    pub fn default_for(policy: PolicyKind) -> Self {
        let grid = match policy {
            PolicyKind::KernelEpsGreedy => CvGrid::default_eps_greedy(),
            PolicyKind::KernelUcb => CvGrid::default_ucb(),
            PolicyKind::WlsEpsGreedy => CvGrid {
                lambdas: Vec::new(),
                gammas: Vec::new(),
                taus: Vec::new(),
            },
        };
        Self {
            k: DEFAULT_CV_K,
            eval_runs: DEFAULT_CV_EVAL_RUNS,
            grid,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    pub experiment: ExperimentConfig,
    pub cv: Option<CvSettings>,
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

/// Raw section → key → value table with usage tracking.
struct Table {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line: line_no,
                    message: format!("malformed section header `{line}`"),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown section `[{name}]`"),
                    });
                }
                if sections.contains_key(name) {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("section `[{name}]` appears twice"),
                    });
                }
                sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    message: "empty key".to_string(),
                });
            }
            let section = current.as_ref().ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("key `{key}` appears before any section header"),
            })?;
            let map = sections.get_mut(section).expect("section exists");
            if map.contains_key(key) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate key `{section}.{key}`"),
                });
            }
            map.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line: line_no,
                    used: false,
                },
            );
        }
        Ok(Self { sections })
    }

    fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        let e = self.sections.get_mut(section)?.get_mut(key)?;
        e.used = true;
        Some((e.value.clone(), e.line))
    }

    fn required(&mut self, section: &str, key: &str) -> Result<(String, usize)> {
        self.take(section, key)
            .ok_or_else(|| Error::config(format!("{section}.{key}"), "required key is missing"))
    }

    fn parse_opt<V>(&mut self, section: &str, key: &str, f: impl Fn(&str) -> Option<V>) -> Result<Option<V>> {
        match self.take(section, key) {
            None => Ok(None),
            Some((v, line)) => f(&v).map(Some).ok_or_else(|| Error::Parse {
                line,
                message: format!("cannot parse value `{v}` for `{section}.{key}`"),
            }),
        }
    }

    fn parse_req<V>(&mut self, section: &str, key: &str, f: impl Fn(&str) -> Option<V>) -> Result<V> {
        self.parse_opt(section, key, f)?
            .ok_or_else(|| Error::config(format!("{section}.{key}"), "required key is missing"))
    }

    /// First key that was never consumed.
    fn unused(&self) -> Option<(String, usize)> {
        self.sections
            .iter()
            .flat_map(|(s, m)| m.iter().map(move |(k, e)| (s, k, e)))
            .filter(|(_, _, e)| !e.used)
            .min_by_key(|(_, _, e)| e.line)
            .map(|(s, k, e)| (format!("{s}.{k}"), e.line))
    }
}

fn num(v: &str) -> Option<f64> {
    v.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn uint(v: &str) -> Option<usize> {
    v.parse::<usize>().ok()
}

fn boolean(v: &str) -> Option<bool> {
    match v {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn num_list(v: &str) -> Option<Vec<f64>> {
    if v.trim().is_empty() {
        return Some(Vec::new());
    }
    v.split(',').map(|s| num(s.trim())).collect()
}

fn point_list(v: &str) -> Option<Vec<Vec<f64>>> {
    v.split(';').map(num_list).collect()
}

fn context_dist(name: &str, dim: usize) -> Option<ContextDist> {
    match name {
        "uniform" => Some(ContextDist::Uniform { dim }),
        "trunc_normal" => Some(ContextDist::TruncNormal { dim }),
        _ => None,
    }
}

fn kernel_kind(v: &str) -> Option<KernelKind> {
    match v {
        "gaussian" => Some(KernelKind::Gaussian),
        "linear" => Some(KernelKind::Linear),
        _ => None,
    }
}

fn kernel_kind_name(k: KernelKind) -> &'static str {
    match k {
        KernelKind::Gaussian => "gaussian",
        KernelKind::Linear => "linear",
    }
}

/// Grid token: `fixed:V`, `log_power:P[:S]`, `finite_dim:S` or
/// `infinite_dim:ALPHA:SOURCE:DELTA:S`.
pub fn parse_lambda_token(tok: &str) -> Option<LambdaSchedule<f64>> {
    let parts: Vec<&str> = tok.trim().split(':').map(str::trim).collect();
    let vals: Option<Vec<f64>> = parts[1..].iter().map(|p| num(p)).collect();
    let vals = vals?;
    match (parts[0], vals.as_slice()) {
        ("fixed", [v]) => Some(LambdaSchedule::Fixed(*v)),
        ("log_power", [p]) => Some(LambdaSchedule::LogPower { power: *p, scale: 1.0 }),
        ("log_power", [p, s]) => Some(LambdaSchedule::LogPower { power: *p, scale: *s }),
        ("finite_dim", [s]) => Some(LambdaSchedule::FiniteDim { scale: *s }),
        ("infinite_dim", [a, g, d, s]) => Some(LambdaSchedule::InfiniteDim {
            alpha: *a,
            source: *g,
            delta: *d,
            scale: *s,
        }),
        _ => None,
    }
}

pub fn lambda_token(l: &LambdaSchedule<f64>) -> String {
    match *l {
        LambdaSchedule::Fixed(v) => format!("fixed:{v:?}"),
        LambdaSchedule::LogPower { power, scale } => format!("log_power:{power:?}:{scale:?}"),
        LambdaSchedule::FiniteDim { scale } => format!("finite_dim:{scale:?}"),
        LambdaSchedule::InfiniteDim {
            alpha,
            source,
            delta,
            scale,
        } => format!("infinite_dim:{alpha:?}:{source:?}:{delta:?}:{scale:?}"),
    }
}

fn parse_env(tab: &mut Table) -> Result<EnvSpec> {
    const S: &str = "environment";
    let (setting, line) = tab.required(S, "setting")?;
    let noise_sigma = tab.parse_opt(S, "noise_sigma", num)?.unwrap_or(DEFAULT_NOISE_SIGMA);
    if noise_sigma < 0.0 {
        return Err(Error::config("environment.noise_sigma", "must be >= 0"));
    }
    let context = |tab: &mut Table| -> Result<ContextDist> {
        let dim = tab.parse_req(S, "dim", uint)?;
        if dim == 0 {
            return Err(Error::config("environment.dim", "must be >= 1"));
        }
        let (name, line) = tab.required(S, "context")?;
        context_dist(&name, dim).ok_or(Error::Parse {
            line,
            message: format!("unknown context distribution `{name}` (uniform, trunc_normal)"),
        })
    };
    let kind = match setting.as_str() {
        "setting1" => EnvKind::Setting1,
        "setting2" => EnvKind::Setting2,
        "setting3" => {
            let x_star = tab.parse_opt(S, "x_star", num_list)?;
            let w_star = tab.parse_opt(S, "w_star", num_list)?;
            for (k, v) in [("x_star", &x_star), ("w_star", &w_star)] {
                if let Some(v) = v {
                    if v.len() != crate::harness::SETTING3_DIM {
                        return Err(Error::config(
                            format!("environment.{k}"),
                            format!("expected {} values, got {}", crate::harness::SETTING3_DIM, v.len()),
                        ));
                    }
                }
            }
            EnvKind::Setting3 { x_star, w_star }
        }
        "setting4" => EnvKind::Setting4,
        "constant" => {
            let context = context(tab)?;
            let means = tab.parse_req(S, "means", num_list)?;
            EnvKind::Constant { context, means }
        }
        "inrkhs" => {
            let context = context(tab)?;
            let (kname, kline) = tab.required(S, "target_kernel")?;
            let kernel = kernel_kind(&kname).ok_or(Error::Parse {
                line: kline,
                message: format!("unknown kernel `{kname}` (gaussian, linear)"),
            })?;
            let gamma = match kernel {
                KernelKind::Gaussian => tab.parse_req(S, "target_gamma", num)?,
                KernelKind::Linear => 1.0,
            };
            let mut arms = Vec::new();
            loop {
                let i = arms.len();
                let ck = format!("arm{i}_coeffs");
                let pk = format!("arm{i}_points");
                let coeffs = tab.parse_opt(S, &ck, num_list)?;
                let points = tab.parse_opt(S, &pk, point_list)?;
                match (coeffs, points) {
                    (None, None) => break,
                    (Some(c), Some(p)) => {
                        let e = Expansion::new(c, p).map_err(|e| Error::config(format!("environment.{ck}"), e.to_string()))?;
                        if let Some(bad) = e.points.iter().find(|p| p.len() != context.dim()) {
                            return Err(Error::config(
                                format!("environment.{pk}"),
                                format!("point has {} coordinates, dim is {}", bad.len(), context.dim()),
                            ));
                        }
                        arms.push(e);
                    }
                    (Some(_), None) => return Err(Error::config(format!("environment.{pk}"), "required key is missing")),
                    (None, Some(_)) => return Err(Error::config(format!("environment.{ck}"), "required key is missing")),
                }
            }
            EnvKind::InRkhs {
                context,
                kernel,
                gamma,
                arms,
            }
        }
        other => {
            return Err(Error::Parse {
                line,
                message: format!(
                    "unknown setting `{other}` (setting1, setting2, setting3, setting4, inrkhs, constant)"
                ),
            })
        }
    };
    Ok(EnvSpec { kind, noise_sigma })
}

fn parse_kernel(tab: &mut Table) -> Result<KernelConfig> {
    const S: &str = "kernel";
    let (name, line) = tab.required(S, "kind")?;
    let kind = kernel_kind(&name).ok_or(Error::Parse {
        line,
        message: format!("unknown kernel `{name}` (gaussian, linear)"),
    })?;
    let gamma = match kind {
        KernelKind::Gaussian => {
            let g = tab.parse_req(S, "gamma", num)?;
            if g <= 0.0 {
                return Err(Error::config("kernel.gamma", "must be > 0"));
            }
            g
        }
        KernelKind::Linear => 1.0,
    };
    let augment_bias = tab.parse_opt(S, "augment_bias", boolean)?.unwrap_or(false);
    Ok(KernelConfig {
        kind,
        gamma,
        augment_bias,
    })
}

fn parse_policy(tab: &mut Table) -> Result<PolicySpec> {
    const S: &str = "policy";
    let (name, line) = tab.required(S, "kind")?;
    let kind = PolicyKind::from_name(&name).ok_or(Error::Parse {
        line,
        message: format!("unknown policy `{name}` (kernel_eps_greedy, kernel_ucb, wls_eps_greedy)"),
    })?;
    let solver_name = tab.take(S, "solver");
    let tol = tab.parse_opt(S, "incremental_tol", num)?;
    let max_rank = tab.parse_opt(S, "incremental_max_rank", uint)?;
    let default = Solver::default();
    let solver = match solver_name {
        None => default,
        Some((v, line)) => match v.as_str() {
            "incremental" => {
                let Solver::Incremental {
                    tol: dtol,
                    max_rank: drank,
                } = default
                else {
                    unreachable!()
                };
                Solver::Incremental {
                    tol: tol.unwrap_or(dtol),
                    max_rank: max_rank.unwrap_or(drank),
                }
            }
            "cholesky" => Solver::Direct(FitMethod::Cholesky),
            "spectral" => Solver::Direct(FitMethod::Spectral),
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown solver `{other}` (incremental, cholesky, spectral)"),
                })
            }
        },
    };
    let solver = match (solver, tol, max_rank) {
        (Solver::Incremental { .. }, _, _) => {
            if let Solver::Incremental { tol, max_rank } = solver {
                if !(tol > 0.0) {
                    return Err(Error::config("policy.incremental_tol", "must be > 0"));
                }
                if max_rank == 0 {
                    return Err(Error::config("policy.incremental_max_rank", "must be >= 1"));
                }
            }
            solver
        }
        (_, Some(_), _) => return Err(Error::config("policy.incremental_tol", "only valid with solver = incremental")),
        (_, _, Some(_)) => {
            return Err(Error::config(
                "policy.incremental_max_rank",
                "only valid with solver = incremental",
            ))
        }
        (s, None, None) => s,
    };
    let ridge = tab.parse_opt(S, "ridge", boolean)?.unwrap_or(false);
    let ucb_lambda = tab.parse_opt(S, "lambda", num)?.unwrap_or(DEFAULT_UCB_LAMBDA);
    if ucb_lambda <= 0.0 {
        return Err(Error::config("policy.lambda", "must be > 0"));
    }
    let tau = tab.parse_opt(S, "tau", num)?.unwrap_or(DEFAULT_UCB_TAU);
    if tau < 0.0 {
        return Err(Error::config("policy.tau", "must be >= 0"));
    }
    Ok(PolicySpec {
        kind,
        solver,
        ridge,
        ucb_lambda,
        tau,
    })
}

fn parse_schedule(tab: &mut Table) -> Result<ScheduleSpec<f64>> {
    const S: &str = "schedule";
    let (eps_name, line) = tab.required(S, "epsilon")?;
    let epsilon = match eps_name.as_str() {
        "paper_sim" => EpsilonSchedule::PaperSim,
        "power_law" => {
            let beta = tab.parse_req(S, "epsilon_beta", num)?;
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::config(
                    "schedule.epsilon_beta",
                    format!("beta must lie in (0, 1), got {beta}"),
                ));
            }
            let scale = tab.parse_opt(S, "epsilon_scale", num)?.unwrap_or(1.0);
            EpsilonSchedule::PowerLaw { beta, scale }
        }
        "constant" => EpsilonSchedule::Constant(tab.parse_req(S, "epsilon_value", num)?),
        other => {
            return Err(Error::Parse {
                line,
                message: format!("unknown epsilon schedule `{other}` (paper_sim, power_law, constant)"),
            })
        }
    };
    epsilon
        .validate()
        .map_err(|e| Error::config("schedule.epsilon", e.to_string()))?;

    let (lam_name, line) = tab.required(S, "lambda")?;
    let scale = |tab: &mut Table| -> Result<f64> { Ok(tab.parse_opt(S, "lambda_scale", num)?.unwrap_or(1.0)) };
    let lambda = match lam_name.as_str() {
        "finite_dim" => LambdaSchedule::FiniteDim { scale: scale(tab)? },
        "infinite_dim" => LambdaSchedule::InfiniteDim {
            alpha: tab.parse_req(S, "lambda_alpha", num)?,
            source: tab.parse_req(S, "lambda_source", num)?,
            delta: tab.parse_req(S, "lambda_delta", num)?,
            scale: scale(tab)?,
        },
        "fixed" => LambdaSchedule::Fixed(tab.parse_req(S, "lambda_value", num)?),
        "log_power" => LambdaSchedule::LogPower {
            power: tab.parse_req(S, "lambda_power", num)?,
            scale: scale(tab)?,
        },
        other => {
            return Err(Error::Parse {
                line,
                message: format!("unknown lambda schedule `{other}` (finite_dim, infinite_dim, fixed, log_power)"),
            })
        }
    };
    lambda
        .validate()
        .map_err(|e| Error::config("schedule.lambda", e.to_string()))?;
    Ok(ScheduleSpec { epsilon, lambda })
}

fn parse_cv(tab: &mut Table, policy: PolicyKind) -> Result<Option<CvSettings>> {
    const S: &str = "cv";
    if !tab.has_section(S) {
        return Ok(None);
    }
    let mut cv = CvSettings::default_for(policy);
    if let Some(k) = tab.parse_opt(S, "k", uint)? {
        cv.k = k;
    }
    if let Some(r) = tab.parse_opt(S, "eval_runs", uint)? {
        cv.eval_runs = r;
    }
    if let Some(g) = tab.parse_opt(S, "gammas", num_list)? {
        cv.grid.gammas = g;
    }
    if let Some(t) = tab.parse_opt(S, "taus", num_list)? {
        cv.grid.taus = t;
    }
    if let Some(l) = tab.parse_opt(S, "lambdas", |v| {
        if v.trim().is_empty() {
            return Some(Vec::new());
        }
        v.split(',').map(parse_lambda_token).collect::<Option<Vec<_>>>()
    })? {
        cv.grid.lambdas = l;
    }
    if cv.k < 2 {
        return Err(Error::config("cv.k", "k must be >= 2"));
    }
    if cv.eval_runs == 0 {
        return Err(Error::config("cv.eval_runs", "must be >= 1"));
    }
    Ok(Some(cv))
}

/// Parses and validates a configuration including the optional `[cv]`
/// section.
pub fn parse_config_file(text: &str) -> Result<ConfigFile> {
    let mut tab = Table::parse(text)?;
    for s in ["environment", "kernel", "policy", "schedule"] {
        if !tab.has_section(s) {
            return Err(Error::config(s, "required section is missing"));
        }
    }
    let env = parse_env(&mut tab)?;
    let kernel = parse_kernel(&mut tab)?;
    let policy = parse_policy(&mut tab)?;
    let schedule = parse_schedule(&mut tab)?;
    let horizon = tab.parse_opt("run", "T", uint)?.unwrap_or(DEFAULT_HORIZON);
    let t0 = tab.parse_opt("run", "t0", uint)?.unwrap_or(DEFAULT_T0);
    let n_runs = tab.parse_opt("run", "n_runs", uint)?.unwrap_or(DEFAULT_N_RUNS);
    let master_seed = tab.parse_opt("run", "seed", |v| v.parse::<u64>().ok())?.unwrap_or(0);
    let cv = parse_cv(&mut tab, policy.kind)?;
    if let Some((key, line)) = tab.unused() {
        return Err(Error::Parse {
            line,
            message: format!("unknown key `{key}`"),
        });
    }
    let experiment = ExperimentConfig {
        env,
        kernel,
        policy,
        schedule,
        horizon,
        t0,
        n_runs,
        master_seed,
    };
    experiment.validate()?;
    Ok(ConfigFile { experiment, cv })
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_file(text).map(|c| c.experiment)
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

fn points(p: &[Vec<f64>]) -> String {
    p.iter().map(|x| list(x)).collect::<Vec<_>>().join("; ")
}

fn context_lines(out: &mut String, c: &ContextDist) {
    let name = match c {
        ContextDist::Uniform { .. } => "uniform",
        ContextDist::TruncNormal { .. } => "trunc_normal",
    };
    out.push_str(&format!("context = {name}\ndim = {}\n", c.dim()));
}

/// Canonical text form; `parse_config(&serialize_config(c)) == c`.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    out.push_str("[environment]\n");
    match &cfg.env.kind {
        EnvKind::Setting1 => out.push_str("setting = setting1\n"),
        EnvKind::Setting2 => out.push_str("setting = setting2\n"),
        EnvKind::Setting3 { x_star, w_star } => {
            out.push_str("setting = setting3\n");
            if let Some(x) = x_star {
                out.push_str(&format!("x_star = {}\n", list(x)));
            }
            if let Some(w) = w_star {
                out.push_str(&format!("w_star = {}\n", list(w)));
            }
        }
        EnvKind::Setting4 => out.push_str("setting = setting4\n"),
        EnvKind::InRkhs {
            context,
            kernel,
            gamma,
            arms,
        } => {
            out.push_str("setting = inrkhs\n");
            context_lines(&mut out, context);
            out.push_str(&format!("target_kernel = {}\n", kernel_kind_name(*kernel)));
            if *kernel == KernelKind::Gaussian {
                out.push_str(&format!("target_gamma = {gamma:?}\n"));
            }
            for (i, e) in arms.iter().enumerate() {
                out.push_str(&format!("arm{i}_coeffs = {}\n", list(&e.coeffs)));
                out.push_str(&format!("arm{i}_points = {}\n", points(&e.points)));
            }
        }
        EnvKind::Constant { context, means } => {
            out.push_str("setting = constant\n");
            context_lines(&mut out, context);
            out.push_str(&format!("means = {}\n", list(means)));
        }
    }
    out.push_str(&format!("noise_sigma = {:?}\n", cfg.env.noise_sigma));

    out.push_str("\n[kernel]\n");
    out.push_str(&format!("kind = {}\n", kernel_kind_name(cfg.kernel.kind)));
    if cfg.kernel.kind == KernelKind::Gaussian {
        out.push_str(&format!("gamma = {:?}\n", cfg.kernel.gamma));
    }
    out.push_str(&format!("augment_bias = {}\n", cfg.kernel.augment_bias));

    let p = &cfg.policy;
    out.push_str("\n[policy]\n");
    out.push_str(&format!("kind = {}\n", p.kind.name()));
    match p.solver {
        Solver::Incremental { tol, max_rank } => {
            out.push_str("solver = incremental\n");
            out.push_str(&format!("incremental_tol = {tol:?}\nincremental_max_rank = {max_rank}\n"));
        }
        Solver::Direct(FitMethod::Cholesky) => out.push_str("solver = cholesky\n"),
        Solver::Direct(FitMethod::Spectral) => out.push_str("solver = spectral\n"),
    }
    out.push_str(&format!("ridge = {}\n", p.ridge));
    out.push_str(&format!("lambda = {:?}\ntau = {:?}\n", p.ucb_lambda, p.tau));

    out.push_str("\n[schedule]\n");
    match cfg.schedule.epsilon {
        EpsilonSchedule::PaperSim => out.push_str("epsilon = paper_sim\n"),
        EpsilonSchedule::PowerLaw { beta, scale } => {
            out.push_str(&format!(
                "epsilon = power_law\nepsilon_beta = {beta:?}\nepsilon_scale = {scale:?}\n"
            ));
        }
        EpsilonSchedule::Constant(e) => out.push_str(&format!("epsilon = constant\nepsilon_value = {e:?}\n")),
    }
    match cfg.schedule.lambda {
        LambdaSchedule::FiniteDim { scale } => {
            out.push_str(&format!("lambda = finite_dim\nlambda_scale = {scale:?}\n"));
        }
        LambdaSchedule::InfiniteDim {
            alpha,
            source,
            delta,
            scale,
        } => out.push_str(&format!(
            "lambda = infinite_dim\nlambda_alpha = {alpha:?}\nlambda_source = {source:?}\n\
             lambda_delta = {delta:?}\nlambda_scale = {scale:?}\n"
        )),
        LambdaSchedule::Fixed(v) => out.push_str(&format!("lambda = fixed\nlambda_value = {v:?}\n")),
        LambdaSchedule::LogPower { power, scale } => out.push_str(&format!(
            "lambda = log_power\nlambda_power = {power:?}\nlambda_scale = {scale:?}\n"
        )),
    }

    out.push_str("\n[run]\n");
    out.push_str(&format!(
        "T = {}\nt0 = {}\nn_runs = {}\nseed = {}\n",
        cfg.horizon, cfg.t0, cfg.n_runs, cfg.master_seed
    ));
    out
}

pub fn serialize_cv(cv: &CvSettings) -> String {
    let lambdas: Vec<String> = cv.grid.lambdas.iter().map(lambda_token).collect();
    format!(
        "[cv]\nk = {}\neval_runs = {}\ngammas = {}\nlambdas = {}\ntaus = {}\n",
        cv.k,
        cv.eval_runs,
        list(&cv.grid.gammas),
        lambdas.join(", "),
        list(&cv.grid.taus)
    )
}

/// First 16 hex digits of the SHA-256 of the canonical serialization.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(serialize_config(cfg).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Human-readable schedule summary used in reports.
pub fn describe_schedule(s: &ScheduleSpec<f64>) -> String {
    let eps = match s.epsilon {
        EpsilonSchedule::PaperSim => "paper_sim".to_string(),
        EpsilonSchedule::PowerLaw { beta, scale } => format!("{scale}*t^-{beta}"),
        EpsilonSchedule::Constant(e) => format!("{e}"),
    };
    format!("epsilon={eps} lambda={}", describe_lambda(&s.lambda))
}
