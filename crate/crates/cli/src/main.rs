//! `ergode`: exact ergodic limits and Monte-Carlo checks for Markov chains.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 solver failure,
//! 4 chain too large for the dense oracle, 5 missing mean return time.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ergode::chain::DEFAULT_ROW_TOL;
use ergode::{Execution, ExperimentConfig, SolveConfig};

use ergode_cli::commands::{self, Common, Failure, SimulateArgs};
use ergode_cli::report;

#[derive(Parser, Debug)]
#[command(name = "ergode", version, about = "Cesaro limits, hitting probabilities and ergodic averages of Markov chains")]
struct Cli {
    /// Emit a JSON report instead of a table.
    #[arg(long, global = true)]
    json: bool,

    /// Row-sum and initial-mass tolerance for chain files.
    #[arg(long, global = true, default_value_t = DEFAULT_ROW_TOL)]
    tol: f64,

    /// Record wall time in the report metadata (makes output run-dependent).
    #[arg(long, global = true)]
    timing: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Communicating classes and state classification.
    Classify { file: PathBuf },
    /// Hitting probabilities, mean return times and every limit.
    Limits {
        file: PathBuf,
        /// Force table output even with --json.
        #[arg(long)]
        table: bool,
        /// Also compute f_ij for transient targets j.
        #[arg(long)]
        with_transient_targets: bool,
    },
    /// Finite-n Cesaro averages and their distance to the limit.
    Cesaro {
        file: PathBuf,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
    },
    /// Monte-Carlo occupation experiment on a chain file or built-in family.
    Simulate {
        file: Option<PathBuf>,
        /// Built-in family: srw_z or reflecting_bd.
        #[arg(long)]
        family: Option<String>,
        /// Family parameter as key=value (repeatable).
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
        /// Target state: a label for chain files, an integer for families.
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        paths: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Dichotomy band, or `auto`.
        #[arg(long, default_value = "auto", value_parser = parse_band)]
        band: Band,
        /// Run paths on the calling thread only.
        #[arg(long)]
        serial: bool,
    },
    /// Declared metadata of a built-in countable family.
    Family {
        name: String,
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, f64)>,
    },
}

#[derive(Debug, Clone, Copy)]
struct Band(Option<f64>);

fn parse_band(s: &str) -> Result<Band, String> {
    if s == "auto" {
        return Ok(Band(None));
    }
    match s.parse::<f64>() {
        Ok(b) if b > 0.0 && b.is_finite() => Ok(Band(Some(b))),
        _ => Err(format!("expected a positive number or `auto`, got `{s}`")),
    }
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v = v.trim().parse::<f64>().map_err(|e| format!("bad value for `{k}`: {e}"))?;
    Ok((k.trim().to_owned(), v))
}

fn run(cli: &Cli) -> Result<report::Report, Failure> {
    if !(cli.tol >= 0.0 && cli.tol.is_finite()) {
        return Err(Failure::usage(format!("--tol must be a non-negative number, got {}", cli.tol)));
    }
    let common = Common { row_tol: cli.tol, solve: SolveConfig::default() };
    match &cli.command {
        Command::Classify { file } => commands::classify(file, &common),
        Command::Limits { file, with_transient_targets, .. } => commands::limits(file, *with_transient_targets, &common),
        Command::Cesaro { file, n } => commands::cesaro(file, *n, &common),
        Command::Simulate { file, family, params, target, n, paths, seed, band, serial } => {
            let execution = if *serial { Execution::Serial } else { Execution::Parallel };
            let args = SimulateArgs {
                file: file.as_deref(),
                family: family.as_deref(),
                params,
                target: target.as_deref(),
                cfg: ExperimentConfig { n: *n, paths: *paths, seed: *seed, band: band.0, execution },
            };
            commands::simulate(&args, &common)
        }
        Command::Family { name, params } => commands::family(name, params),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let started = Instant::now();
    match with_thread_cap(|| run(&cli)) {
        Ok(mut report) => {
            let elapsed = started.elapsed().as_secs_f64() * 1e3;
            if cli.timing {
                report.metadata.wall_time_ms = Some(elapsed);
                eprintln!("elapsed {elapsed:.1} ms");
            }
            let table = matches!(cli.command, Command::Limits { table: true, .. });
            if cli.json && !table {
                println!("{}", report::to_json(&report));
            } else {
                print!("{}", report::to_table(&report));
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}

/// Runs `f` on a pool capped by `ERGODE_THREADS` (0 or unset = all cores).
#[cfg(feature = "parallel")]
fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let threads = std::env::var("ERGODE_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .unwrap_or(0);
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
fn with_thread_cap<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    f()
}
