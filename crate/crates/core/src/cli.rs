//! `pollsim` command line.
//!
//! Exit codes: 0 success, 2 invalid input (a JSON error list goes to
//! stderr), 3 runtime or numerical failure.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::analysis::{drift, is_stable, stability_report, theta_star, StabilityReport};
use crate::config::{Horizon, System, SystemConfig};
use crate::engine::{palm_mean_estimate, run_with, write_trace_csv, Estimate, RunOptions, SimOutput};
use crate::error::{EngineError, EstimateError, OracleError, SweepError};
use crate::oracle;
use crate::sweep::{self, PolicyBounds, SweepPlan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Default buffer cap of the `oracle` command when the config has none.
pub const DEFAULT_ORACLE_CAP: u64 = 40;

#[derive(Debug, Parser)]
#[command(name = "pollsim", version, about = "Two-queue polling system: simulate, analyze, validate, sweep, oracle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON system configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Write the result here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the simulator and emit the Palm records and time averages.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write an event trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Stability verdict, fixed point and related coefficients.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Compare simulated Palm means against the fixed point.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Number of cycles to simulate; defaults to the config horizon.
        #[arg(long)]
        cycles: Option<u64>,
    },
    /// Random policies plus the mixed-exhaustive grid, Pareto-filtered.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 2)]
        replications: usize,
        /// Comma-separated non-positive alphaC values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "0,-0.25,-0.5,-1,-3")]
        alpha_grid: Vec<f64>,
        /// Only the (ex, alphaC) side of the grid.
        #[arg(long)]
        one_side: bool,
        /// JSON summary with the frontier indices.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Exact stationary means from the truncated CTMC.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        buffer_cap: Option<u64>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Invalid(Vec<String>),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    fn report(&self) -> String {
        match self {
            CliError::Invalid(errors) => json!({ "errors": errors }).to_string(),
            CliError::Runtime(msg) => json!({ "error": msg }).to_string(),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => CliError::Invalid(c.0.iter().map(|i| i.to_string()).collect()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EstimateError> for CliError {
    fn from(e: EstimateError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::NotExponential(_) | OracleError::CapTooSmall { .. } => CliError::Invalid(vec![e.to_string()]),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Engine(e) => e.into(),
            SweepError::Estimate(e) => e.into(),
            other => CliError::Invalid(vec![other.to_string()]),
        }
    }
}

/// Load and resolve a config; also returns the config with every default
/// filled in, for embedding in reports.
pub fn load_config(path: &Path) -> Result<(SystemConfig, System), CliError> {
    let cfg = SystemConfig::load(path).map_err(|e| CliError::Invalid(vec![e.to_string()]))?;
    resolve_config(cfg)
}

fn resolve_config(mut cfg: SystemConfig) -> Result<(SystemConfig, System), CliError> {
    let sys = cfg
        .resolve()
        .map_err(|e| CliError::Invalid(e.0.iter().map(|i| i.to_string()).collect()))?;
    if cfg.service.mean.is_none() {
        cfg.service.mean = Some(sys.service.mean());
    }
    cfg.initial = Some(sys.initial);
    Ok((cfg, sys))
}

/// Write `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn emit(out: &Option<PathBuf>, stdout: &mut dyn Write, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => write_atomic(p, bytes)?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("serializable");
    s.push(b'\n');
    s
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    config: &'a SystemConfig,
    #[serde(flatten)]
    output: &'a SimOutput,
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    config: &'a SystemConfig,
    #[serde(flatten)]
    report: StabilityReport,
}

/// Per-queue comparison of a Palm-mean estimate with `θ*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueueComparison {
    pub sim: f64,
    pub ci: f64,
    pub theta_star: f64,
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub queues: [QueueComparison; 2],
    pub pass: bool,
}

/// Pass when `|sim − θ*| ≤ CI + 3/μ` for both queues.
pub fn compare_palm_means(est: &[Estimate; 2], theta: [f64; 2], mu: f64) -> Comparison {
    let queues = [0, 1].map(|i| {
        let gap = (est[i].mean - theta[i]).abs();
        let tolerance = est[i].half_width + 3.0 / mu;
        QueueComparison {
            sim: est[i].mean,
            ci: est[i].half_width,
            theta_star: theta[i],
            gap,
            tolerance,
            pass: gap <= tolerance,
        }
    });
    let pass = queues.iter().all(|q| q.pass);
    Comparison { queues, pass }
}

#[derive(Serialize)]
struct ValidateReport<'a> {
    config: &'a SystemConfig,
    cycles: usize,
    burn_in: usize,
    comparison: Comparison,
    drift_at_theta_star: f64,
    pass: bool,
}

#[derive(Serialize)]
struct OracleReport<'a> {
    config: &'a SystemConfig,
    buffer_cap: u64,
    #[serde(flatten)]
    solution: oracle::OracleSolution,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    config: &'a SystemConfig,
    samples: usize,
    replications: usize,
    alpha_grid: &'a [f64],
    side_both: bool,
    bounds: PolicyBounds,
    frontier: &'a [usize],
    points: &'a [sweep::ParetoPoint],
}

/// Execute a parsed command, writing primary output to `stdout` unless
/// `--out` is set.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, seed, trace } => {
            let mut cfg = SystemConfig::load(&common.config).map_err(|e| CliError::Invalid(vec![e.to_string()]))?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let (cfg, sys) = resolve_config(cfg)?;
            let out = run_with(
                &sys,
                RunOptions {
                    replicate: 0,
                    trace: trace.is_some(),
                },
            )?;
            if let (Some(path), Some(events)) = (&trace, &out.trace) {
                let mut buf = Vec::new();
                write_trace_csv(&mut buf, events)?;
                write_atomic(path, &buf)?;
            }
            emit(&common.out, stdout, &to_json(&SimulateReport { config: &cfg, output: &out }))
        }
        Command::Analyze { common } => {
            let (cfg, sys) = load_config(&common.config)?;
            let report = stability_report(&sys.rates(), &sys.policy);
            emit(&common.out, stdout, &to_json(&AnalyzeReport { config: &cfg, report }))
        }
        Command::Validate { common, cycles } => {
            let (mut cfg, mut sys) = load_config(&common.config)?;
            let rates = sys.rates();
            let verdict = is_stable(&rates, &sys.policy);
            if !verdict.stable {
                let reasons = verdict.reasons.iter().map(|r| format!("unstable: {}", r.as_str())).collect();
                return Err(CliError::Invalid(reasons));
            }
            if let Some(k) = cycles {
                if k == 0 {
                    return Err(CliError::Invalid(vec!["--cycles must be positive".into()]));
                }
                sys.horizon = Horizon::Cycles(k);
                cfg.horizon = sys.horizon;
            }
            let fixed = theta_star(&rates, &sys.policy).map_err(|e| CliError::Runtime(e.to_string()))?;
            let out = run_with(&sys, RunOptions::default())?;
            let burn_in = out.palm.len() / 10;
            let est = palm_mean_estimate(&out, burn_in, 20)?;
            let comparison = compare_palm_means(&est, fixed.theta, sys.mu);
            let d = drift(fixed.theta, &rates, &sys.policy).map_err(|e| CliError::Runtime(e.to_string()))?;
            let pass = comparison.pass;
            let report = ValidateReport {
                config: &cfg,
                cycles: out.palm.len(),
                burn_in,
                comparison,
                drift_at_theta_star: d.delta_v,
                pass,
            };
            emit(&common.out, stdout, &to_json(&report))
        }
        Command::Sweep {
            common,
            samples,
            replications,
            alpha_grid,
            one_side,
            summary,
        } => {
            let (cfg, sys) = load_config(&common.config)?;
            if replications == 0 {
                return Err(CliError::Invalid(vec!["--replications must be at least 1".into()]));
            }
            let plan = SweepPlan {
                samples,
                bounds: PolicyBounds::default(),
                alpha_grid,
                side_both: !one_side,
                replications,
            };
            let result = sweep::run_sweep(&plan, &sys)?;
            let mut csv = Vec::new();
            sweep::write_csv(&mut csv, &result.points)?;
            emit(&common.out, stdout, &csv)?;
            if let Some(path) = summary {
                let s = SweepSummary {
                    config: &cfg,
                    samples,
                    replications,
                    alpha_grid: &plan.alpha_grid,
                    side_both: plan.side_both,
                    bounds: plan.bounds,
                    frontier: &result.frontier,
                    points: &result.points,
                };
                write_atomic(&path, &to_json(&s))?;
            }
            Ok(())
        }
        Command::Oracle { common, buffer_cap } => {
            let (cfg, sys) = load_config(&common.config)?;
            let cap = buffer_cap.or(sys.buffer_cap).unwrap_or(DEFAULT_ORACLE_CAP);
            let solution = oracle::solve(&sys, cap)?;
            emit(
                &common.out,
                stdout,
                &to_json(&OracleReport {
                    config: &cfg,
                    buffer_cap: cap,
                    solution,
                }),
            )
        }
    }
}

/// Parse `args`, run, report errors on stderr and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.report());
            e.exit_code()
        }
    }
}
