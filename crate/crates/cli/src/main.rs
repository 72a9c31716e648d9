//! `ocplab` command-line entry point.
//!
//! Exit status: 0 on success, 2 when a run completes but its verdict rejects
//! the hypothesis under test, 1 on runtime or input errors.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ocplab", version, about = "Long-horizon analysis of control-affine optimal control problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a storage certificate: dissipation inequality, nonnegativity and coercivity.
    Certify(CommonArgs),
    /// Solve one finite horizon with the switching-time or the direct solver.
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// Horizon length; defaults to the longest horizon of the problem.
        #[arg(short = 'T', long)]
        horizon: Option<f64>,
        /// Use the direct solver even when a template is available.
        #[arg(long)]
        direct: bool,
    },
    /// Sweep horizons, build the limit control and judge pattern preservation.
    Sweep(CommonArgs),
    /// Horizon experiment for regulators with quadratic control cost.
    Qr(CommonArgs),
    /// Regenerate the data behind a published figure.
    ReproducePaper {
        #[arg(long, value_enum)]
        target: Target,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Target {
    /// Singular-arc extremal of the `ex42` instance at T = 10.
    Figure1,
}

#[derive(Debug, Clone, Args)]
struct CommonArgs {
    /// Built-in instance name, or a path to a TOML problem file.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    problem: Option<String>,
    /// Path to a TOML problem file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for multistart solvers.
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance overrides: a bare number sets the optimizer tolerance,
    /// `key=value` pairs (comma separated) set rtol, atol, quad, opt, conv,
    /// singular, margin or gtol.
    #[arg(long)]
    tol: Option<String>,
    /// Direct-solver cells (solve), cells per unit time (qr) or grid points per axis (certify).
    #[arg(long)]
    mesh: Option<usize>,
    /// Iteration cap for the optimizers.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Comma-separated horizons.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<f64>>,
    /// Pattern template such as `2,1,0` or `[1 0],free`.
    #[arg(long)]
    template: Option<String>,
    /// Storage candidate as an expression in x1..xn.
    #[arg(long)]
    storage: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let invocation: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Certify(c) => commands::certify(&c, &invocation),
        Command::Solve { common, horizon, direct } => commands::solve(&common, horizon, direct, &invocation),
        Command::Sweep(c) => commands::sweep(&c, &invocation),
        Command::Qr(c) => commands::qr(&c, &invocation),
        Command::ReproducePaper { target: Target::Figure1, out } => commands::figure1(&out, &invocation),
    };
    match result {
        Ok(commands::Status::Success) => ExitCode::SUCCESS,
        Ok(commands::Status::Rejected) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
