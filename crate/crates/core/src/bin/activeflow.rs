use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use activeflow::cli;

/// Solver and verification harness for active-particle transport on the
/// periodic box.
#[derive(Parser)]
#[command(name = "activeflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write diagnostics, snapshots and a summary.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Run the verification suite at the configured scale.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Decay rate towards the constant state as JSON.
    Decay {
        #[arg(long)]
        config: PathBuf,
    },
    /// Relax to a stationary state and report it as JSON.
    Stationary {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compare against the finite-difference oracle.
    OracleCompare {
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("ACTIVEFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("ACTIVEFLOW_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Cli::parse();
    if let Err(message) = init_threads() {
        let body = serde_json::json!({ "error": { "kind": "ValidationError", "message": message } });
        eprintln!("{body}");
        return ExitCode::from(cli::EXIT_ERROR as u8);
    }
    let code = match args.command {
        Command::Simulate { config, resume } => cli::cmd_simulate(&config, resume),
        Command::Verify { config } => cli::cmd_verify(&config),
        Command::Decay { config } => cli::cmd_decay(&config),
        Command::Stationary { config } => cli::cmd_stationary(&config),
        Command::OracleCompare { config } => cli::cmd_oracle_compare(&config),
    };
    ExitCode::from(code as u8)
}
