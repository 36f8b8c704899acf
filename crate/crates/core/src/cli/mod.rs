//! Command-line harness: `bridgekit --config run.json --out DIR` and `bridgekit selftest`.

pub mod config;
pub mod experiments;
pub mod selftest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::metrics::RunReport;
use config::{Resolved, RunConfig};
use experiments::Outcome;
use selftest::{render_table, run_selftest, SelftestOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(
    name = "bridgekit",
    version,
    about = "Implicit diffusion-bridge samplers on analytic Gaussian problems"
)]
#[command(args_conflicts_with_subcommands = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment from a JSON config.
    Run(RunArgs),
    /// Run the fast built-in checks and print a pass/fail table.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct RunArgs {
    /// Path to the JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `output` in the config).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed (overrides `seed` in the config).
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Worker threads, 0 = all cores. Falls back to BRIDGEKIT_THREADS.
    #[arg(long, value_name = "K", env = "BRIDGEKIT_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct SelftestArgs {
    /// Worker threads, 0 = all cores.
    #[arg(long, value_name = "K", env = "BRIDGEKIT_THREADS")]
    pub threads: Option<usize>,
    /// Test fixture: evaluate the checks against a deliberately wrong lambda formula.
    #[arg(long, hide = true)]
    pub corrupt_lambda: bool,
}

/// Parses `args` (including the program name) and runs; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match cli.command {
        Some(Command::Selftest(args)) => selftest(&args),
        Some(Command::Run(args)) => run(&args),
        None => run(&cli.run),
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| format!("cannot start thread pool: {e}"))
}

fn selftest(args: &SelftestArgs) -> i32 {
    let pool = match thread_pool(args.threads) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let opts = SelftestOptions {
        corrupt_lambda: args.corrupt_lambda,
    };
    let start = Instant::now();
    let results = pool.install(|| run_selftest(&opts));
    print!("{}", render_table(&results));
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} checks, {} failed, {:.2} s",
        results.len(),
        failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_FAILED_CHECK
    }
}

/// Reads, parses and resolves a config file; applies the seed override.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<Resolved, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut config = RunConfig::from_json(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    config
        .resolve()
        .map_err(|e| format!("invalid config {}: {e}", path.display()))
}

fn run(args: &RunArgs) -> i32 {
    let Some(path) = &args.config else {
        eprintln!("error: --config PATH is required");
        return EXIT_INVALID;
    };
    let resolved = match load_config(path, args.seed) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let out_dir = args
        .out
        .clone()
        .or_else(|| resolved.config.output.clone())
        .unwrap_or_else(|| PathBuf::from("bridgekit-out"));
    let pool = match thread_pool(args.threads) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let start = Instant::now();
    let outcome = match pool.install(|| resolved.run_experiment()) {
        Ok(o) => o,
        Err(f) => {
            eprintln!("numerical failure in {}: {}", f.operation, f.error);
            return EXIT_NUMERICAL;
        }
    };
    let wall = start.elapsed().as_secs_f64();
    match write_outputs(&resolved, &outcome, &out_dir, wall) {
        Ok(report) => {
            if let Err(e) = report.validate() {
                eprintln!("numerical failure in report: {e}");
                return EXIT_NUMERICAL;
            }
            for (k, v) in &report.metrics {
                log::info!("{k} = {v}");
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INVALID
        }
    }
}

fn write_outputs(resolved: &Resolved, outcome: &Outcome, dir: &Path, wall: f64) -> Result<RunReport, String> {
    let io = |e: std::io::Error| format!("cannot write to {}: {e}", dir.display());
    std::fs::create_dir_all(dir).map_err(io)?;
    let name = resolved.config.experiment.name();
    let csv_path = dir.join(format!("{name}.csv"));
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| format!("cannot write {}: {e}", csv_path.display()))?;
    let csv_err = |e: csv::Error| format!("cannot write {}: {e}", csv_path.display());
    w.write_record(&outcome.header).map_err(csv_err)?;
    for row in &outcome.rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(io)?;

    let report = RunReport {
        experiment: name.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: resolved.config.seed,
        config: serde_json::to_value(&resolved.config).map_err(|e| e.to_string())?,
        metrics: outcome.metrics.clone(),
        wall_time_s: wall,
        predictor_calls: outcome.predictor_calls,
        predictor_calls_per_step: if outcome.steps > 0 {
            outcome.predictor_calls as f64 / outcome.steps as f64
        } else {
            0.0
        },
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
    std::fs::write(dir.join(REPORT_FILE), json).map_err(io)?;
    Ok(report)
}
