use clap::{Args, Parser, Subcommand};
use harnack_lab::{run, CommandKind, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "harnack-lab",
    version,
    about = "Coupling and Harnack-inequality experiments for SDEs driven by \
             anisotropic subordinated Brownian motions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample subordinated paths and tabulate the empirical characteristic function.
    SimulateLevy(RunArgs),
    /// Estimate inverse clock moments against the closed-form oracles.
    Moments(RunArgs),
    /// Run a coupled-pair batch with Girsanov weight accounting.
    Couple(RunArgs),
    /// Verify log- and power-Harnack inequalities, conditional and unconditional.
    VerifyHarnack(RunArgs),
    /// Check the semigroup gradient estimate at a point.
    Gradient(RunArgs),
    /// Tabulate the modulus integral G_rho and the distance bound Gamma_rho.
    RhoTable(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the TOML experiment configuration.
    config: PathBuf,
    /// Dotted-path override, e.g. --set clock.t_horizon=2 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads; defaults to HARNACK_LAB_WORKERS, then all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "harnack-out")]
    out: PathBuf,
}

fn env_workers() -> Option<usize> {
    let raw = std::env::var("HARNACK_LAB_WORKERS").ok()?;
    match raw.trim().parse::<usize>() {
        Ok(n) => Some(n),
        Err(_) => {
            eprintln!("warning: ignoring unparsable HARNACK_LAB_WORKERS={raw:?}");
            None
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::SimulateLevy(a) => (CommandKind::SimulateLevy, a),
        Command::Moments(a) => (CommandKind::Moments, a),
        Command::Couple(a) => (CommandKind::Couple, a),
        Command::VerifyHarnack(a) => (CommandKind::VerifyHarnack, a),
        Command::Gradient(a) => (CommandKind::Gradient, a),
        Command::RhoTable(a) => (CommandKind::RhoTable, a),
    };
    let opts = RunOptions {
        config_path: args.config,
        overrides: args.set,
        workers: args.workers.or_else(env_workers),
        out_dir: args.out,
    };
    match run(kind, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
