//! Command-line entry points.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diagnostics::{self, TheoryReport};
use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig, PolicyKind, PolicySpec, RegretCurve};

use config::{parse_config_file, serialize_config, serialize_cv, ConfigFile, CvSettings};

pub const THREADS_ENV: &str = "KBANDIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "kbandit", version, about = "Kernel ε-greedy contextual bandit simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; falls back to KBANDIT_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `policy.kind`.
    #[arg(long)]
    pub policy: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run n_runs episodes and write per-run and summary CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run several configs (files, or directories of `*.conf` files).
    Sweep {
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cross-validate policy parameters and evaluate the winner.
    Cv {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the diagnostics suite.
    Diagnose {
        /// Config for the randomization check; a built-in one otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the full Monte-Carlo sizes instead of the quick ones.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Emit mean/stderr regret columns per policy and an SVG plot.
    Plotdata {
        #[arg(long)]
        config: PathBuf,
        /// Log-log axes in the SVG.
        #[arg(long)]
        loglog: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Run { common, .. }
            | Command::Sweep { common, .. }
            | Command::Cv { common, .. }
            | Command::Diagnose { common, .. }
            | Command::Plotdata { common, .. } => common,
        }
    }
}

/// Process exit code for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical { .. } => 2,
        _ => 1,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code. Errors go to standard error.
pub fn cli_run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn thread_count(common: &CommonArgs) -> Result<Option<usize>> {
    if let Some(n) = common.threads {
        return if n == 0 {
            Err(Error::config("--threads", "must be >= 1"))
        } else {
            Ok(Some(n))
        };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::config(THREADS_ENV, format!("expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(None),
    }
}

pub fn execute(cmd: &Command) -> Result<()> {
    let common = cmd.common();
    let threads = thread_count(common)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("--threads", e.to_string()))?;
    pool.install(|| dispatch(cmd))
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Run { config, common } => {
            let file = load(config, common)?;
            fs::create_dir_all(&common.out)?;
            let curve = run_to_dir(&file.experiment, &common.out)?;
            println!(
                "{} runs, final mean regret {:.6} ± {:.6}",
                curve.n_runs,
                curve.mean.last().copied().unwrap_or(0.0),
                curve.stderr.last().copied().unwrap_or(0.0)
            );
            Ok(())
        }
        Command::Sweep { config, common } => sweep(config, common),
        Command::Cv { config, common } => cv(config, common),
        Command::Diagnose { config, full, common } => diagnose(config.as_deref(), *full, common),
        Command::Plotdata { config, loglog, common } => plotdata(config, *loglog, common),
    }
}

/// Reads and validates a config file, applying `--seed` and `--policy`.
pub fn load(path: &Path, common: &CommonArgs) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
    let mut file = parse_config_file(&text)?;
    if let Some(s) = common.seed {
        file.experiment.master_seed = s;
    }
    if let Some(name) = &common.policy {
        let kind = PolicyKind::from_name(name)
            .ok_or_else(|| Error::config("--policy", format!("unknown policy `{name}`")))?;
        if kind != file.experiment.policy.kind {
            file.experiment.policy.kind = kind;
            if file.cv.is_some() {
                file.cv = Some(CvSettings {
                    grid: CvSettings::default_for(kind).grid,
                    ..file.cv.clone().expect("checked")
                });
            }
        }
        file.experiment.validate()?;
    }
    Ok(file)
}

fn meta_rows(cfg: &ExperimentConfig, traces: &[harness::RegretTrace]) -> Vec<(String, String)> {
    let mut rows = vec![
        ("config_hash".to_string(), config::config_hash(cfg)),
        ("master_seed".to_string(), cfg.master_seed.to_string()),
        ("policy".to_string(), cfg.policy.label()),
        ("n_runs".to_string(), traces.len().to_string()),
    ];
    if let Some((x, w)) = cfg.env.setting3_parameters(cfg.master_seed) {
        let j = |v: &[f64]| v.iter().map(|c| output::real(*c)).collect::<Vec<_>>().join(" ");
        rows.push(("setting3_x_star".to_string(), j(&x)));
        rows.push(("setting3_w_star".to_string(), j(&w)));
    }
    for (i, tr) in traces.iter().enumerate() {
        rows.push((format!("run_{i}_seed"), tr.seed.to_string()));
    }
    rows
}

pub fn run_file_name(run_id: usize) -> String {
    format!("run_{run_id:04}.csv")
}

/// Runs all episodes of `cfg` and writes `config.txt`, `meta.csv`,
/// `run_NNNN.csv` per run and `summary.csv` into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<RegretCurve> {
    let traces = harness::run_many(cfg)?;
    fs::write(dir.join("config.txt"), serialize_config(cfg))?;
    for (i, tr) in traces.iter().enumerate() {
        output::write_run_csv(&dir.join(run_file_name(i)), i, tr)?;
    }
    let curve = harness::average_traces(&traces)?;
    output::write_summary_csv(&dir.join("summary.csv"), &curve)?;
    output::write_meta_csv(&dir.join("meta.csv"), &meta_rows(cfg, &traces))?;
    Ok(curve)
}

fn collect_configs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "conf"))
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::config("--config", "no config files found"));
    }
    Ok(out)
}

fn sweep(paths: &[PathBuf], common: &CommonArgs) -> Result<()> {
    let files = collect_configs(paths)?;
    // Validate everything before running anything.
    let loaded = files
        .iter()
        .map(|p| load(p, common).map(|f| (p.clone(), f)))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&common.out)?;
    let mut rows = Vec::new();
    for (i, (path, file)) in loaded.iter().enumerate() {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("config{i}"));
        let name = format!("{i:03}_{stem}");
        let dir = common.out.join(&name);
        fs::create_dir_all(&dir)?;
        let curve = run_to_dir(&file.experiment, &dir)?;
        let last = curve.mean.len() - 1;
        println!("{name}: final mean regret {:.6} ± {:.6}", curve.mean[last], curve.stderr[last]);
        rows.push((
            name,
            format!(
                "{},{},{}",
                file.experiment.policy.label(),
                output::real(curve.mean[last]),
                output::real(curve.stderr[last])
            ),
        ));
    }
    let mut text = String::from("name,policy,final_mean,final_stderr\n");
    for (name, rest) in rows {
        text.push_str(&format!("{name},{rest}\n"));
    }
    fs::write(common.out.join("sweep.csv"), text)?;
    Ok(())
}

fn cv(path: &Path, common: &CommonArgs) -> Result<()> {
    let file = load(path, common)?;
    let cfg = &file.experiment;
    let settings = file.cv.clone().unwrap_or_else(|| CvSettings::default_for(cfg.policy.kind));
    let outcome = harness::cross_validate(cfg, &settings.grid, settings.k, settings.eval_runs)?;
    fs::create_dir_all(&common.out)?;
    fs::write(
        common.out.join("config.txt"),
        format!("{}\n{}", serialize_config(cfg), serialize_cv(&settings)),
    )?;
    output::write_cv_table(&common.out.join("cv_table.csv"), &outcome)?;
    let curve = harness::average_traces(&outcome.evaluation)?;
    output::write_summary_csv(&common.out.join("summary.csv"), &curve)?;
    let best = &outcome.rows[outcome.best_index];
    let rows = vec![
        ("config_hash".to_string(), config::config_hash(cfg)),
        ("master_seed".to_string(), cfg.master_seed.to_string()),
        ("k".to_string(), settings.k.to_string()),
        ("eval_runs".to_string(), settings.eval_runs.to_string()),
        ("n_tuples".to_string(), outcome.rows.len().to_string()),
        ("winner_index".to_string(), outcome.best_index.to_string()),
        ("winner".to_string(), best.tuple.describe()),
        ("winner_cv_regret".to_string(), output::real(best.mean_regret)),
        (
            "winner_config_hash".to_string(),
            config::config_hash(&outcome.best_config),
        ),
        (
            "eval_final_mean".to_string(),
            output::real(*curve.mean.last().expect("nonempty")),
        ),
        (
            "eval_final_stderr".to_string(),
            output::real(*curve.stderr.last().expect("nonempty")),
        ),
    ];
    output::write_meta_csv(&common.out.join("cv_summary.csv"), &rows)?;
    println!(
        "winner: {} (cv regret {:.6}); evaluation final regret {:.6} ± {:.6}",
        best.tuple.describe(),
        best.mean_regret,
        curve.mean.last().expect("nonempty"),
        curve.stderr.last().expect("nonempty")
    );
    Ok(())
}

fn diagnose(config: Option<&Path>, full: bool, common: &CommonArgs) -> Result<()> {
    let seed = common.seed.unwrap_or(0);
    let mut reports: Vec<TheoryReport> = Vec::new();

    let (n_mc, n_seeds, decay_seeds) = if full { (500, 200, 25) } else { (100, 50, 3) };
    let lemma = diagnostics::covariance_config(seed);
    reports.push(diagnostics::check_covariance_unbiasedness(
        &lemma,
        0,
        200,
        n_mc,
        diagnostics::COVARIANCE_TOLERANCE * (500.0 / n_mc as f64).sqrt(),
    )?);

    let rand_cfg = match config {
        Some(p) => load(p, common)?.experiment,
        None => diagnostics::randomization_config(seed),
    };
    reports.push(diagnostics::randomization_rate_check(
        &rand_cfg,
        n_seeds,
        diagnostics::RANDOMIZATION_TOLERANCE,
    )?);

    let sigma = lemma.validate()?.context_dist().second_moment();
    let lambda = 0.1;
    let n_eff = diagnostics::effective_dimension(&sigma, lambda)?;
    let d = sigma.rows() as f64;
    let bound = d.min(sigma.trace() / lambda);
    reports.push(TheoryReport::new(
        "effective_dimension_bound",
        (n_eff - bound).max(0.0),
        0.0,
        1,
        &lemma,
        format!("N(lambda={lambda}) = {n_eff:.6} <= min(d, tr/lambda) = {bound:.6}"),
    ));

    let decay_cfg = diagnostics::decay_config(seed);
    let checkpoints: Vec<usize> = if full {
        diagnostics::default_checkpoints()
    } else {
        (1..=5).map(|i| 200 * i).collect()
    };
    let decay = diagnostics::estimation_error_decay(
        &decay_cfg,
        0,
        &checkpoints,
        decay_seeds,
        diagnostics::DECAY_TOLERANCE,
    )?;
    reports.push(decay.report);

    fs::create_dir_all(&common.out)?;
    output::write_reports_csv(&common.out.join("diagnostics.csv"), &reports)?;
    for r in &reports {
        println!("{}", r.line());
    }
    Ok(())
}

fn plotdata(path: &Path, loglog: bool, common: &CommonArgs) -> Result<()> {
    let file = load(path, common)?;
    let base = file.experiment;
    let specs: Vec<PolicySpec> = if common.policy.is_some() {
        vec![base.policy]
    } else {
        vec![
            base.policy,
            PolicySpec::kernel_eps_greedy(),
            PolicySpec::wls(false),
            PolicySpec::wls(true),
            PolicySpec::kernel_ucb(base.policy.ucb_lambda, base.policy.tau),
        ]
    };
    let mut series: Vec<(String, RegretCurve)> = Vec::new();
    for spec in specs {
        let mut cfg = base.clone();
        cfg.policy = spec;
        let label = cfg.policy.label();
        if series.iter().any(|(l, _)| *l == label) {
            continue;
        }
        let traces = harness::run_many(&cfg)?;
        series.push((label, harness::average_traces(&traces)?));
    }
    fs::create_dir_all(&common.out)?;
    output::write_plotdata_csv(&common.out.join("plotdata.csv"), &series)?;
    output::write_svg(&common.out.join("regret.svg"), &series, loglog)?;
    for (label, c) in &series {
        println!(
            "{label}: final mean regret {:.6} ± {:.6}",
            c.mean.last().copied().unwrap_or(0.0),
            c.stderr.last().copied().unwrap_or(0.0)
        );
    }
    Ok(())
}
