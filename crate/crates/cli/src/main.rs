//! `so5vortex`: solve, continue and validate SO(5) vortex profiles.
//!
//! Exit codes: 0 success, 1 usage, 2 non-convergence, 3 check failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "so5vortex", version, about = "Radial SO(5) Ginzburg-Landau vortices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GridArgs {
    /// Number of nodes (default 4001).
    #[arg(long)]
    pub n: Option<usize>,
    /// Domain radius (default 40).
    #[arg(long)]
    pub rmax: Option<f64>,
    /// `uniform`, `graded:<strength>` or `auto` (default: graded to the core width).
    #[arg(long)]
    pub grading: Option<String>,
    /// Flat `key = value` file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SolveArgs {
    /// Real `κ > 0` or `inf`.
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub d: Option<i64>,
    #[arg(long)]
    pub g: Option<f64>,
    /// `normal`, `perturbed[:amplitude]` or `trial:<rho>` (default perturbed:0.5).
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_newton: Option<usize>,
    /// Profile CSV; the sidecar JSON goes next to it (default profile.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub d: Option<i64>,
    /// Also write the JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug, Clone)]
pub struct BranchArgs {
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub d: Option<i64>,
    /// Smallest `g` on the branch (default 0.02).
    #[arg(long)]
    pub g_min: Option<f64>,
    /// Number of points below `g*` (default 40).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Recorded in the metadata; the trace itself is deterministic.
    #[arg(long)]
    pub rng_seed: Option<u64>,
    /// Branch CSV; metadata JSON goes next to it (default branch.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ValidateArgs {
    /// Profile CSV with its JSON sidecar.
    pub profile: PathBuf,
    /// Report JSON (default `<profile>.report.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct LimitArgs {
    /// Comma-separated finite κ values, increasing.
    #[arg(long)]
    pub kappas: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub d: Option<i64>,
    #[arg(long)]
    pub g: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub d: Option<i64>,
    /// Comma-separated decreasing `g` values (default 0.1,0.01,0.001).
    #[arg(long)]
    pub g_list: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for one profile and write CSV + sidecar.
    Solve(SolveArgs),
    /// Print the bifurcation threshold g* as JSON.
    Threshold(ThresholdArgs),
    /// Trace the antiferromagnetic-core branch below g*.
    Branch(BranchArgs),
    /// Re-check a written profile.
    Validate(ValidateArgs),
    /// Compare finite-κ solutions with the κ = ∞ solution.
    Limit(LimitArgs),
    /// Follow minimizers as g decreases.
    ScanG(ScanArgs),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Solve(so5_vortex::Error),
    Check(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solve(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Solve(e) => write!(f, "error: {e}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<so5_vortex::Error> for CliError {
    fn from(e: so5_vortex::Error) -> Self {
        use so5_vortex::Error as E;
        match e {
            E::InvalidGrid(_) | E::InvalidParameter(_) | E::NonPositive(_) | E::Io(_) => CliError::Usage(e.to_string()),
            other => CliError::Solve(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => commands::solve(a),
        Command::Threshold(a) => commands::threshold(a),
        Command::Branch(a) => commands::branch(a),
        Command::Validate(a) => commands::validate(a),
        Command::Limit(a) => commands::limit(a),
        Command::ScanG(a) => commands::scan_g(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
