//! `acds` — experiment runner for the active-learning equation-discovery
//! engine.
//!
//! `acds run` executes replicated active-learning runs over a grid of noise
//! levels and design criteria, writing `runs.csv`, `summary.csv`, and one
//! JSON trace per run. `acds verify` recomputes the summary from `runs.csv`
//! and fails on any mismatch.
//!
//! Exit codes: 0 success; 1 configuration or I/O error; 2 when more than 10%
//! of the requested runs aborted (their rows are still recorded).

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{build_plan, OUT_ENV_VAR};

#[derive(Parser)]
#[command(
    name = "acds",
    version,
    about = "Discover sparse differential equations with actively designed experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute replicated runs and write results to the output directory
    Run(RunArgs),
    /// Check that summary.csv matches a recomputation from runs.csv
    Verify(VerifyArgs),
}

#[derive(Args)]
pub struct RunArgs {
    /// TOML config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Study name (ode-linear, ode-random, bass, burgers, diffusion-2d)
    #[arg(long)]
    study: Option<String>,
    /// Noise variances, comma-separated or repeated
    #[arg(long, value_delimiter = ',')]
    sigma2: Vec<f64>,
    /// Design criteria (acds, d-optimal-only, maximin-only)
    #[arg(long = "criterion", value_delimiter = ',')]
    criteria: Vec<String>,
    /// Replications per (sigma2, criterion) cell
    #[arg(long)]
    reps: Option<u64>,
    /// Master seed; per-run seeds are derived from it deterministically
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overridden by the ACDS_OUT environment variable)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Collect exactly this many observations, ignoring the convergence stop
    #[arg(long = "fixed-n")]
    fixed_n: Option<usize>,
    /// Relative coefficient-change tolerance for the convergence stop
    #[arg(long)]
    tol: Option<f64>,
    /// Maximum concurrent runs
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Directory holding runs.csv and summary.csv (default: acds-results,
    /// overridden by the ACDS_OUT environment variable)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn env_out() -> Option<PathBuf> {
    std::env::var_os(OUT_ENV_VAR).map(PathBuf::from)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Exit 1 for genuine argument errors so that code 2 stays
            // reserved for excessive run failures; --help/--version exit 0.
            let is_error = e.use_stderr();
            let _ = e.print();
            return if is_error {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match cli.command {
        Command::Run(args) => {
            let plan = match build_plan(&args, env_out()) {
                Ok(plan) => plan,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(1);
                }
            };
            eprintln!(
                "running {} | sigma2 {:?} | criteria {:?} | {} rep(s) | seed {} -> {}",
                plan.study.name(),
                plan.sigma2,
                plan.criteria.iter().map(|c| c.name()).collect::<Vec<_>>(),
                plan.replications,
                plan.seed,
                plan.out.display(),
            );
            match output::execute(&plan) {
                Ok(report) => {
                    eprintln!(
                        "{} run(s) finished, {} aborted; results in {}",
                        report.total - report.aborted,
                        report.aborted,
                        plan.out.display()
                    );
                    if report.aborted * 10 > report.total {
                        eprintln!("error: more than 10% of runs aborted");
                        ExitCode::from(2)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(1)
                }
            }
        }
        Command::Verify(args) => {
            let dir = env_out()
                .or(args.out)
                .unwrap_or_else(|| PathBuf::from("acds-results"));
            match output::verify(&dir) {
                Ok(()) => {
                    eprintln!("summary.csv matches runs.csv in {}", dir.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("verification failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
