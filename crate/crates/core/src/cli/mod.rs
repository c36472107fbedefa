//! Batch driver: config parsing, single solves, noise sweeps and the
//! invariant verifier.
//!
//! Exit codes: 0 success, 1 error (including usage errors), 2 a negative
//! result (infeasible solve, sweep without the convergence signature, or a
//! failed invariant).

pub mod config;
pub mod scenario;
pub mod verify;

pub use config::RunConfig;
pub use scenario::{Physics, Scenario};

use crate::error::{Error, Result};
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NEGATIVE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mbreg", version, about = "Minimization-based regularization for EIT, magnetostatics and acoustics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `[output] dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base noise seed (overrides `[noise] base_seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for per-δ runs; 0 = all cores.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize, perturb and solve once.
    Solve(RunArgs),
    /// Noise sweep with convergence report.
    Study(RunArgs),
    /// Run the invariant suites and print a pass/fail table.
    Verify {
        /// Comma-separated subset of grid, eit, magnet, acoustic.
        #[arg(long, default_value = "grid,eit,magnet,acoustic")]
        problems: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Test hook: inject a known defect (`broken-adjoint`).
        #[arg(long, hide = true)]
        fault: Option<String>,
    },
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{}", e.render()) } else { write!(out, "{}", e.render()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => cmd_solve(&a, out),
        Command::Study(a) => cmd_study(&a, out),
        Command::Verify { problems, seed, jobs, fault } => cmd_verify(&problems, seed, jobs, fault.as_deref(), out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn prepare(args: &RunArgs) -> Result<(RunConfig, PathBuf, u64)> {
    let config = RunConfig::load(&args.config)?;
    let dir = args.out.clone().unwrap_or_else(|| config.output_dir());
    std::fs::create_dir_all(&dir)?;
    let seed = args.seed.unwrap_or(config.noise.base_seed);
    Ok((config, dir, seed))
}

pub fn cmd_solve(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let (config, dir, seed) = prepare(args)?;
    let scenario = Scenario::build(&config)?;
    let delta = config.solve_delta();
    let r = scenario.solve(&config, delta, seed)?;
    scenario.write_solution(&dir, delta, seed, &r)?;
    writeln!(
        out,
        "delta {delta:e}  feasible {}  discrepancy {:e}  constraint {:e}  iterations {}  -> {}",
        r.constraint_satisfied,
        r.discrepancy_value,
        r.constraint_value,
        r.iterations,
        dir.display()
    )?;
    Ok(if r.constraint_satisfied { EXIT_OK } else { EXIT_NEGATIVE })
}

pub fn cmd_study(args: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let (config, dir, seed) = prepare(args)?;
    let scenario = Scenario::build(&config)?;
    let report = scenario.study(&config, seed, args.jobs)?;
    write_report(&report, &dir)?;
    writeln!(out, "{:>10} {:>10} {:>10} {:>12} {:>10} {:>6} {:>8}", "delta", "alpha", "error", "discrepancy", "b_norm", "iters", "feasible")?;
    for r in &report.rows {
        writeln!(
            out,
            "{:>10.1e} {:>10.2e} {:>10.4} {:>12.3e} {:>10.4e} {:>6} {:>8}",
            r.delta, r.alpha, r.error, r.discrepancy, r.b_norm, r.iterations, r.feasible
        )?;
    }
    writeln!(
        out,
        "b_norm_bounded {}  error_decreased {}  all_feasible {}  rule_violation {}",
        report.b_norm_bounded, report.error_decreased, report.all_feasible, report.rule_violation
    )?;
    Ok(if report.b_norm_bounded && report.error_decreased { EXIT_OK } else { EXIT_NEGATIVE })
}

pub fn write_report(report: &crate::framework::ConvergenceReport, dir: &Path) -> Result<()> {
    report.write_csv(&dir.join("report.csv"))?;
    report.write_json(&dir.join("report.json"))
}

pub fn cmd_verify(problems: &str, seed: u64, jobs: usize, fault: Option<&str>, out: &mut dyn Write) -> Result<i32> {
    let suites: Vec<verify::Suite> = problems
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if suites.is_empty() {
        return Err(Error::InvalidArgument("usage: --problems needs at least one of grid, eit, magnet, acoustic".into()));
    }
    let fault = fault.map(str::parse).transpose()?;
    let rows = verify::run_suites(&suites, seed, jobs, fault)?;
    for r in &rows {
        writeln!(
            out,
            "{} {:<9} {:<52} {:>11.3e} (tol {:.0e})",
            if r.outcome.pass { "PASS" } else { "FAIL" },
            r.suite,
            r.check,
            r.outcome.value,
            r.outcome.tolerance
        )?;
    }
    let failed = rows.iter().filter(|r| !r.outcome.pass).count();
    writeln!(out, "{} checks, {failed} failed", rows.len())?;
    Ok(if failed == 0 { EXIT_OK } else { EXIT_NEGATIVE })
}
