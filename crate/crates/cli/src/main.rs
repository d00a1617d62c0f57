use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ecfkit::asympower::{self, PowerSpec};
use ecfkit::ecftest::{Analysis, PermutationOptions, PermutationRule, WsMethod};
use ecfkit::harness::{self, ExperimentSpec};
use ecfkit::simgen::{self, Dist, Scheme, SimConfig};
use ecfkit::{dataio, CovSurface, Grid};
use nalgebra::DMatrix;
use serde::Deserialize;

const USAGE: u8 = 2;
const DATA: u8 = 3;
const DEGENERATE: u8 = 4;

/// Equal-covariance-function tests for grouped functional data.
#[derive(Parser)]
#[command(name = "ecfkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Test a CSV dataset and print a JSON report.
    Test(TestArgs),
    /// Run a Monte Carlo rejection-rate table.
    Simulate(SimulateArgs),
    /// Asymptotic power under a local alternative.
    Power(PowerArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Shift,
    Last,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Gaussian,
    T4,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Nv,
    Br,
    Rp,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Quantile,
    Pvalue,
}

#[derive(clap::Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "shift")]
    scheme: SchemeArg,
    /// Number of groups; must match --sizes when both are given.
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated group sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [20usize, 25, 22, 18, 16])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    rho: f64,
    #[arg(long, default_value_t = 0.0)]
    omega: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    dist: DistArg,
    /// Basis size (odd); defaults to 11, or 25 for --scheme last.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long = "J", default_value_t = 180)]
    j: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "br")]
    method: MethodArg,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 1000)]
    permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "quantile")]
    rule: RuleArg,
    /// Ignore the header grid and use a uniform grid over A,B.
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["A", "B"])]
    domain: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Experiment JSON; missing fields take their defaults.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the cells as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PowerArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: USAGE, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure { code: DATA, message: message.into() }
    }
}

impl From<ecfkit::Error> for Failure {
    fn from(e: ecfkit::Error) -> Self {
        let code = if e.is_degenerate() { DEGENERATE } else { DATA };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::data(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn check_alpha(alpha: f64) -> CliResult {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn emit(text: &str, out: Option<&Path>) -> CliResult {
    match out {
        Some(p) => fs::write(p, text)?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> CliResult {
    if let Some(k) = args.k {
        if k != args.sizes.len() {
            return Err(Failure::usage(format!("--k {k} does not match {} sizes", args.sizes.len())));
        }
    }
    let scheme = match args.scheme {
        SchemeArg::Shift => Scheme::ShiftBasis,
        SchemeArg::Last => Scheme::LastEigen,
    };
    let cfg = SimConfig {
        sizes: args.sizes,
        j: args.j,
        q: args.q.unwrap_or(if scheme == Scheme::LastEigen { 25 } else { 11 }),
        rho: args.rho,
        omega: args.omega,
        dist: match args.dist {
            DistArg::Gaussian => Dist::Gaussian,
            DistArg::T4 => Dist::T4,
        },
        scheme,
        ..SimConfig::default()
    };
    cfg.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let ds = simgen::generate_dataset(&cfg, args.seed)?;
    match args.out {
        Some(p) => dataio::write_dataset(&ds, p)?,
        None => dataio::write_dataset_to(&ds, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_test(args: TestArgs) -> CliResult {
    check_alpha(args.alpha)?;
    if matches!(args.method, MethodArg::Rp) && args.permutations < 1 {
        return Err(Failure::usage("--permutations must be at least 1"));
    }
    let domain = args.domain.map(|d| (d[0], d[1]));
    let ds = dataio::read_dataset(&args.input, domain)?;
    let analysis = Analysis::new(&ds)?;
    let report = match args.method {
        MethodArg::Nv => analysis.ws_test(WsMethod::Naive, args.alpha)?,
        MethodArg::Br => analysis.ws_test(WsMethod::BiasReduced, args.alpha)?,
        MethodArg::Rp => analysis.permutation_test(&PermutationOptions {
            permutations: args.permutations,
            alpha: args.alpha,
            seed: args.seed,
            rule: match args.rule {
                RuleArg::Quantile => PermutationRule::Quantile,
                RuleArg::Pvalue => PermutationRule::PValue,
            },
        })?,
    };
    let mut json = dataio::report_to_json(&report)?;
    json.push('\n');
    emit(&json, args.out.as_deref())
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    let mut spec: ExperimentSpec = read_json(&args.config)?;
    if let Some(r) = args.reps {
        spec.reps = r;
    }
    if let Some(s) = args.seed {
        spec.master_seed = s;
    }
    spec.validate().map_err(|e| Failure::data(format!("{}: {e}", args.config.display())))?;
    let cells = harness::run_table(&spec)?;
    for c in &cells {
        eprintln!("omega={} done ({} reps)", c.omega, c.reps);
    }
    match &args.out {
        Some(p) => harness::write_csv(&cells, fs::File::create(p)?)?,
        None => harness::write_csv(&cells, io::stdout().lock())?,
    }
    if let Some(p) = &args.json {
        harness::write_json(&cells, fs::File::create(p)?)?;
    }
    Ok(())
}

fn default_draws() -> usize {
    100_000
}

fn default_alpha() -> f64 {
    0.05
}

fn default_tol() -> f64 {
    1e-12
}

/// Grid as explicit points (trapezoid weights) or `j` uniform points on `[a, b]`.
#[derive(Deserialize)]
#[serde(untagged)]
enum GridConfig {
    Points { points: Vec<f64> },
    Uniform { j: usize, a: f64, b: f64 },
}

#[derive(Deserialize)]
struct PowerConfig {
    grid: GridConfig,
    gamma: Vec<Vec<f64>>,
    d: Vec<Vec<Vec<f64>>>,
    tau: Vec<f64>,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default = "default_draws")]
    mc_draws: usize,
    #[serde(default = "default_tol")]
    eigen_rel_tol: f64,
}

fn surface(grid: &Grid, rows: &[Vec<f64>], what: &str) -> CliResult<CovSurface> {
    let j = grid.len();
    if rows.len() != j || rows.iter().any(|r| r.len() != j) {
        return Err(Failure::data(format!("{what} must be a {j}x{j} array")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    CovSurface::new(grid.clone(), DMatrix::from_row_slice(j, j, &flat))
        .map_err(|e| Failure::data(format!("{what}: {e}")))
}

fn cmd_power(args: PowerArgs) -> CliResult {
    if let Some(a) = args.alpha {
        check_alpha(a)?;
    }
    if args.draws.is_some_and(|m| m < 1000) {
        return Err(Failure::usage("--draws must be at least 1000"));
    }
    let cfg: PowerConfig = read_json(&args.config)?;
    let grid = match cfg.grid {
        GridConfig::Points { points } => Grid::trapezoid(points)?,
        GridConfig::Uniform { j, a, b } => Grid::uniform(j, a, b)?,
    };
    let gamma = surface(&grid, &cfg.gamma, "gamma")?;
    let d_surfaces = cfg
        .d
        .iter()
        .enumerate()
        .map(|(i, rows)| surface(&grid, rows, &format!("d[{i}]")))
        .collect::<CliResult<Vec<_>>>()?;
    let spec = PowerSpec {
        gamma,
        d_surfaces,
        tau: cfg.tau,
        alpha: args.alpha.unwrap_or(cfg.alpha),
        mc_draws: args.draws.unwrap_or(cfg.mc_draws),
        eigen_rel_tol: cfg.eigen_rel_tol,
    };
    let report = asympower::asymptotic_power(&spec, args.seed)?;
    let mut json = serde_json::to_string_pretty(&report).map_err(|e| Failure::data(e.to_string()))?;
    json.push('\n');
    emit(&json, None)
}

fn configure_threads() -> CliResult {
    let Ok(raw) = std::env::var("ECFKIT_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| Failure::usage(format!("ECFKIT_THREADS={raw:?} is not a count")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Power(a) => cmd_power(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ecfkit: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
