mod commands;
mod config;
mod input;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "aslopt", version, about = "Time-optimal bang-bang-singular trajectories via augmented switching laws")]
pub struct Cli {
    /// RunConfig JSON; flags below override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub tol_rank: Option<f64>,
    #[arg(long, global = true)]
    pub tol_feas: Option<f64>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Oracle grid points per duration in the first round.
    #[arg(long, global = true)]
    pub grid_density: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract or rebuild the ASL, write dense samples and the feasibility report.
    Simulate {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Rank test on a feasible trajectory.
    Check {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Iterative terminal-time descent. Without a trajectory a chain problem
    /// starts from the built-in rest-to-rest seed.
    Optimize {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Chattering recursion from a window of junction distances.
    Chatter {
        #[arg(long)]
        n: usize,
        /// Comma-separated, decreasing.
        #[arg(long, value_delimiter = ',', required = true)]
        window: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        iterations: usize,
    },
    /// Brute-force grid search over short arc sequences.
    Oracle {
        #[arg(long)]
        problem: PathBuf,
    },
    /// Reproduce one of the built-in experiments.
    Repro {
        #[arg(value_enum)]
        case: ReproCase,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ReproCase {
    #[value(name = "viiA")]
    ViiA,
    #[value(name = "viiB")]
    ViiB,
    #[value(name = "viiC")]
    ViiC,
    #[value(name = "chatter4")]
    Chatter4,
}

/// Process exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Usage = 1,
    Infeasible = 2,
    NotSatisfied = 3,
    Numerical = 4,
}

fn error_status(err: &anyhow::Error) -> Status {
    use aslopt_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Infeasible { .. } | E::OnBoundary { .. } | E::InvalidJunction { .. } | E::Stale { .. }) => {
            Status::Infeasible
        }
        Some(
            E::Projection(_) | E::Degenerate(_) | E::Restructure(_) | E::Regime(_) | E::Domain(_) | E::NoSolution(_),
        ) => Status::Numerical,
        _ => Status::Usage,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Status::Usage as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Ok(v) = std::env::var("ASLOPT_THREADS") {
        match v.parse::<usize>() {
            Ok(k) if k > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            }
            _ => {
                eprintln!("error: ASLOPT_THREADS must be a positive integer");
                return ExitCode::from(Status::Usage as u8);
            }
        }
    }
    match commands::run(&cli) {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(error_status(&e) as u8)
        }
    }
}
