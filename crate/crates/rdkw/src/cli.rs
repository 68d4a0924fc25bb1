//! Command-line front end: cycle verification, single optimization runs,
//! and replicated benchmark experiments.
//!
//! Exit codes: 0 success, 2 usage error, 3 validation error (a schedule
//! failing the convergence conditions without `--force`, or a cycle failing
//! verification), 4 divergence-dominated result (more than half of the
//! replications diverged).
//!
//! An optional `--config FILE` supplies any of the long flags as flat
//! `key=value` lines; explicit flags override file values.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;

use crate::bench::{
    default_theta0, format_scientific, run_experiment, Algorithm, ExperimentPlan,
    ExperimentResult, ObjectiveKind, ScheduleParams, SEED_SPLIT,
};
use crate::error::RdkwError;
use crate::objectives::{nmse, NoisyObjective};
use crate::optimize::{run, OptimizerConfig};
use crate::perturb::{build_circulant_cycle, build_hadamard_cycle, verify_cycle, CirculantSpec};

/// Residual threshold below which a constructed cycle verifies.
const VERIFY_TOLERANCE: f64 = 1e-10;

#[derive(Parser)]
#[command(
    name = "rdkw",
    version,
    about = "Gradient-free stochastic optimization with deterministic perturbation cycles"
)]
struct Cli {
    /// Flat key=value file supplying defaults for any long flag.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a perturbation cycle and report its moment residuals.
    Verify(VerifyArgs),
    /// Run one optimizer instance and report the final error.
    Run(RunArgs),
    /// Run a replicated experiment and print a summary table.
    Bench(BenchArgs),
}

#[derive(Args, Default)]
struct VerifyArgs {
    /// Problem dimension.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    p: Option<u64>,

    /// Cycle construction: circulant or hadamard.
    #[arg(long)]
    source: Option<String>,

    /// Write the cycle to FILE as CSV, one direction per line.
    #[arg(long, value_name = "FILE")]
    dump: Option<PathBuf>,
}

#[derive(Args, Default)]
struct RunArgs {
    /// Problem dimension.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    p: Option<u64>,

    /// Algorithm, e.g. dspkw-2c, rdkw-1h, rdkw-2r.
    #[arg(long)]
    alg: Option<String>,

    /// Loss: quadratic or fourth-order.
    #[arg(long)]
    objective: Option<String>,

    /// Measurement-noise level.
    #[arg(long)]
    sigma: Option<f64>,

    /// Total simulation (function evaluation) budget.
    #[arg(long)]
    budget: Option<u64>,

    /// Seed determining every random draw of the invocation.
    #[arg(long)]
    seed: Option<u64>,

    /// Step-size exponent.
    #[arg(long)]
    alpha: Option<f64>,

    /// Sensitivity-decay exponent.
    #[arg(long)]
    gamma: Option<f64>,

    /// Sensitivity scale (delta_n = c / (n+1)^gamma).
    #[arg(long)]
    c: Option<f64>,

    /// Stability offset (a_n = 1 / (n+B+1)^alpha); default 0.1x iterations.
    #[arg(long = "B")]
    b: Option<f64>,

    /// Initial point as a scalar fill value for all coordinates.
    #[arg(long)]
    theta0: Option<f64>,

    /// Write the trajectory to FILE as CSV (iteration, squared error).
    #[arg(long, value_name = "FILE")]
    trajectory: Option<PathBuf>,

    /// Run even if the schedule fails the convergence conditions.
    #[arg(long)]
    force: bool,
}

#[derive(Args, Default)]
struct BenchArgs {
    /// Standard table protocol 1-4; runs sigma 0 and 0.01 unless --sigma.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    table: Option<u8>,

    /// Problem dimension.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    p: Option<u64>,

    /// Comma-separated algorithm list, or "all".
    #[arg(long)]
    alg: Option<String>,

    /// Loss: quadratic or fourth-order.
    #[arg(long)]
    objective: Option<String>,

    /// Measurement-noise level.
    #[arg(long)]
    sigma: Option<f64>,

    /// Total simulation budget per replication.
    #[arg(long)]
    budget: Option<u64>,

    /// Number of replications per algorithm.
    #[arg(long)]
    reps: Option<u32>,

    /// Base seed; replication r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,

    /// Step-size exponent.
    #[arg(long)]
    alpha: Option<f64>,

    /// Sensitivity-decay exponent.
    #[arg(long)]
    gamma: Option<f64>,

    /// Sensitivity scale.
    #[arg(long)]
    c: Option<f64>,

    /// Stability offset.
    #[arg(long = "B")]
    b: Option<f64>,

    /// Initial point as a scalar fill value.
    #[arg(long)]
    theta0: Option<f64>,

    /// Write per-replication records to FILE as CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,

    /// Run even if the schedule fails the convergence conditions.
    #[arg(long)]
    force: bool,
}

/// A failed invocation, carrying its exit code.
#[derive(Debug)]
enum CliFailure {
    Usage(String),
    Validation(String),
    Divergence(String),
}

impl CliFailure {
    fn code(&self) -> u8 {
        match self {
            CliFailure::Usage(_) => 2,
            CliFailure::Validation(_) => 3,
            CliFailure::Divergence(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliFailure::Usage(m) | CliFailure::Validation(m) | CliFailure::Divergence(m) => m,
        }
    }
}

impl From<RdkwError> for CliFailure {
    fn from(err: RdkwError) -> Self {
        match err {
            RdkwError::InvalidSchedule(_) => CliFailure::Validation(err.to_string()),
            other => CliFailure::Usage(other.to_string()),
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "p",
    "alg",
    "objective",
    "sigma",
    "budget",
    "reps",
    "seed",
    "alpha",
    "gamma",
    "c",
    "B",
    "theta0",
    "table",
    "source",
    "force",
    "csv",
    "dump",
    "trajectory",
];

/// Values loaded from a `--config` file; flags take precedence.
struct Settings {
    file: HashMap<String, String>,
}

impl Settings {
    fn load(path: Option<&PathBuf>) -> Result<Self, CliFailure> {
        let mut file = HashMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| {
                CliFailure::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            file = parse_config(&text)?;
        }
        Ok(Self { file })
    }

    /// Flag value if given, else the config-file value, else None.
    fn resolve<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, CliFailure> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliFailure::Usage(format!("config key {key}: cannot parse value {raw:?}"))
            }),
        }
    }

    fn resolve_flag(&self, key: &str, flag: bool) -> Result<bool, CliFailure> {
        if flag {
            return Ok(true);
        }
        Ok(self.resolve::<bool>(key, None)?.unwrap_or(false))
    }

    fn resolve_path(&self, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>, CliFailure> {
        if flag.is_some() {
            return Ok(flag);
        }
        Ok(self.file.get(key).map(PathBuf::from))
    }
}

fn parse_config(text: &str) -> Result<HashMap<String, String>, CliFailure> {
    let mut map = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliFailure::Usage(format!("config line {}: expected key=value", idx + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if !CONFIG_KEYS.contains(&key) {
            return Err(CliFailure::Usage(format!(
                "config line {}: unknown key {key:?}",
                idx + 1
            )));
        }
        map.insert(key.to_string(), value.to_string());
    }
    Ok(map)
}

fn parse_algorithms(text: &str) -> Result<Vec<Algorithm>, CliFailure> {
    if text.eq_ignore_ascii_case("all") {
        return Ok(Algorithm::ALL.to_vec());
    }
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| {
            Algorithm::parse(name)
                .ok_or_else(|| CliFailure::Usage(format!("unknown algorithm {name:?}")))
        })
        .collect()
}

fn parse_objective(text: &str) -> Result<ObjectiveKind, CliFailure> {
    ObjectiveKind::parse(text)
        .ok_or_else(|| CliFailure::Usage(format!("unknown objective {text:?}")))
}

/// Schedule flags the user actually supplied; applied on top of whatever
/// defaults the plan or protocol carries.
struct ScheduleOverrides {
    alpha: Option<f64>,
    gamma: Option<f64>,
    c: Option<f64>,
    stability: Option<f64>,
}

impl ScheduleOverrides {
    fn resolve(
        settings: &Settings,
        alpha: Option<f64>,
        gamma: Option<f64>,
        c: Option<f64>,
        b: Option<f64>,
    ) -> Result<Self, CliFailure> {
        Ok(Self {
            alpha: settings.resolve("alpha", alpha)?,
            gamma: settings.resolve("gamma", gamma)?,
            c: settings.resolve("c", c)?,
            stability: settings.resolve("B", b)?,
        })
    }

    fn apply(&self, params: &mut ScheduleParams) {
        if let Some(alpha) = self.alpha {
            params.alpha = alpha;
        }
        if let Some(gamma) = self.gamma {
            params.gamma = gamma;
        }
        if let Some(c) = self.c {
            params.c = c;
        }
        if self.stability.is_some() {
            params.stability = self.stability;
        }
    }
}

/// Fails with exit code 3 when the schedule violates a convergence
/// condition and `--force` was not given.
fn gate_schedule(params: &ScheduleParams, force: bool) -> Result<(), CliFailure> {
    let schedule = params.resolve(1).map_err(CliFailure::from)?;
    let verdict = schedule.validate();
    if verdict.ok || force {
        return Ok(());
    }
    let details: Vec<String> = verdict.violations.iter().map(|v| v.to_string()).collect();
    Err(CliFailure::Validation(format!(
        "schedule fails convergence conditions: {} (use --force to run anyway)",
        details.join("; ")
    )))
}

fn write_file(path: &PathBuf, content: &str) -> Result<(), CliFailure> {
    fs::write(path, content)
        .map_err(|e| CliFailure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn cmd_verify(args: VerifyArgs, settings: &Settings) -> Result<u8, CliFailure> {
    let p = settings.resolve("p", args.p)?.unwrap_or(10) as usize;
    if p == 0 {
        return Err(CliFailure::Usage("p must be at least 1".into()));
    }
    let source = settings
        .resolve("source", args.source)?
        .unwrap_or_else(|| "circulant".to_string());
    let cycle = match source.to_ascii_lowercase().as_str() {
        "circulant" => build_circulant_cycle(&CirculantSpec { dimension: p })?,
        "hadamard" => build_hadamard_cycle(p)?,
        other => {
            return Err(CliFailure::Usage(format!(
                "unknown source {other:?}, expected circulant or hadamard"
            )))
        }
    };
    let report = verify_cycle(&cycle);
    println!("source={source} p={p} P={}", cycle.cycle_length());
    println!("p1_residual={}", format_scientific(report.p1_residual));
    println!("p2_residual={}", format_scientific(report.p2_residual));
    println!("max_col_norm={:.12}", report.max_col_norm);
    if let Some(path) = settings.resolve_path("dump", args.dump)? {
        write_file(&path, &cycle.to_csv())?;
    }
    if report.p1_residual <= VERIFY_TOLERANCE && report.p2_residual <= VERIFY_TOLERANCE {
        Ok(0)
    } else {
        Err(CliFailure::Validation(format!(
            "cycle residuals exceed {VERIFY_TOLERANCE:e}"
        )))
    }
}

fn cmd_run(args: RunArgs, settings: &Settings) -> Result<u8, CliFailure> {
    let p = settings.resolve("p", args.p)?.unwrap_or(10) as usize;
    let alg_text = settings
        .resolve("alg", args.alg)?
        .unwrap_or_else(|| "dspkw-2c".to_string());
    let algorithm = Algorithm::parse(&alg_text)
        .ok_or_else(|| CliFailure::Usage(format!("unknown algorithm {alg_text:?}")))?;
    let objective_text = settings
        .resolve("objective", args.objective)?
        .unwrap_or_else(|| "quadratic".to_string());
    let objective_kind = parse_objective(&objective_text)?;
    let sigma = settings.resolve("sigma", args.sigma)?.unwrap_or(0.0);
    let budget = settings.resolve("budget", args.budget)?.unwrap_or(2000);
    let seed = settings.resolve("seed", args.seed)?.unwrap_or(0);
    let force = settings.resolve_flag("force", args.force)?;
    let mut params = ScheduleParams::default();
    ScheduleOverrides::resolve(settings, args.alpha, args.gamma, args.c, args.b)?
        .apply(&mut params);
    gate_schedule(&params, force)?;

    let theta0 = match settings.resolve("theta0", args.theta0)? {
        Some(fill) => Array1::from_elem(p, fill),
        None => default_theta0(p),
    };
    let estimator = algorithm.estimator();
    let n_end = budget / estimator.simulations_per_step();
    let schedule = params.resolve(n_end)?;

    let loss = objective_kind.build(p)?;
    let theta_star = loss
        .theta_star()
        .ok_or_else(|| CliFailure::Usage("objective has no known minimizer".into()))?
        .to_owned();
    let mut objective = NoisyObjective::new(loss, sigma, seed)?;
    let record_trajectory = args.trajectory.is_some() || settings.file.contains_key("trajectory");
    let config = OptimizerConfig {
        dimension: p,
        estimator,
        source: algorithm.source(seed ^ SEED_SPLIT),
        schedule,
        simulation_budget: budget,
        theta0: theta0.clone(),
        record_trajectory,
    };
    let outcome = run(&config, &mut objective)?;
    let error = nmse(outcome.theta_end.view(), theta0.view(), theta_star.view())?;

    println!(
        "algorithm={} objective={} sigma={sigma} budget={budget} seed={seed}",
        algorithm.name(),
        objective_kind.name()
    );
    println!(
        "iterations={} simulations={} diverged={}",
        outcome.iterations, outcome.simulations_used, outcome.diverged
    );
    println!("nmse={}", format_scientific(error));

    if let Some(path) = settings.resolve_path("trajectory", args.trajectory)? {
        let mut csv = String::from("n,squared_error\n");
        for (n, theta) in outcome.trajectory.as_deref().unwrap_or(&[]) {
            let diff = theta - &theta_star;
            csv.push_str(&format!("{n},{}\n", diff.dot(&diff)));
        }
        write_file(&path, &csv)?;
    }

    if outcome.diverged {
        Err(CliFailure::Divergence(
            "the run diverged; its final error is the last finite iterate's".into(),
        ))
    } else {
        Ok(0)
    }
}

fn cmd_bench(args: BenchArgs, settings: &Settings) -> Result<u8, CliFailure> {
    let table = settings.resolve("table", args.table)?;
    let sigma_override = settings.resolve("sigma", args.sigma)?;
    let force = settings.resolve_flag("force", args.force)?;
    let overrides =
        ScheduleOverrides::resolve(settings, args.alpha, args.gamma, args.c, args.b)?;

    let sigmas: Vec<f64> = match (table, sigma_override) {
        (_, Some(sigma)) => vec![sigma],
        (Some(_), None) => vec![0.0, 0.01],
        (None, None) => vec![0.0],
    };

    let mut plans = Vec::new();
    for &sigma in &sigmas {
        let mut plan = match table {
            Some(number) => ExperimentPlan::table(number, sigma)?,
            None => {
                let budget = settings.resolve("budget", args.budget)?.unwrap_or(2000);
                let objective_text = settings
                    .resolve("objective", args.objective.clone())?
                    .unwrap_or_else(|| "quadratic".to_string());
                let mut plan =
                    ExperimentPlan::new(parse_objective(&objective_text)?, sigma, budget);
                plan.algorithms = Algorithm::ALL.to_vec();
                plan
            }
        };
        if let Some(text) = settings.resolve("alg", args.alg.clone())? {
            plan.algorithms = parse_algorithms(&text)?;
        }
        if let Some(budget) = settings.resolve("budget", args.budget)? {
            plan.budget = budget;
        }
        if let Some(reps) = settings.resolve("reps", args.reps)? {
            plan.replications = reps;
        }
        if let Some(seed) = settings.resolve("seed", args.seed)? {
            plan.base_seed = seed;
        }
        if let Some(p) = settings.resolve("p", args.p)? {
            // protocol and default initial points are constant fills, so a
            // dimension change keeps the fill value
            let fill = plan.theta0[0];
            plan.dimension = p as usize;
            plan.theta0 = Array1::from_elem(plan.dimension, fill);
        }
        if let Some(fill) = settings.resolve("theta0", args.theta0)? {
            plan.theta0 = Array1::from_elem(plan.dimension, fill);
        }
        overrides.apply(&mut plan.schedule);
        gate_schedule(&plan.schedule, force)?;
        plans.push(plan);
    }

    let mut results: Vec<ExperimentResult> = Vec::new();
    for plan in &plans {
        results.push(run_experiment(plan)?);
    }

    for result in &results {
        println!("{}", result.text_table());
    }

    if let Some(path) = settings.resolve_path("csv", args.csv)? {
        let mut csv = String::new();
        for (idx, result) in results.iter().enumerate() {
            let text = result.to_csv();
            if idx == 0 {
                csv.push_str(&text);
            } else if let Some((_, rows)) = text.split_once('\n') {
                csv.push_str(rows);
            }
        }
        write_file(&path, &csv)?;
    }

    if results.iter().any(ExperimentResult::divergence_dominated) {
        Err(CliFailure::Divergence(
            "more than half of the replications diverged for at least one algorithm".into(),
        ))
    } else {
        Ok(0)
    }
}

fn dispatch(cli: Cli) -> Result<u8, CliFailure> {
    let settings = Settings::load(cli.config.as_ref())?;
    match cli.command {
        Command::Verify(args) => cmd_verify(args, &settings),
        Command::Run(args) => cmd_run(args, &settings),
        Command::Bench(args) => cmd_bench(args, &settings),
    }
}

/// Entry point for the binary; returns the process exit code.
pub fn run_cli() -> u8 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let is_usage_error = err.use_stderr();
            let _ = err.print();
            return if is_usage_error { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            failure.code()
        }
    }
}
