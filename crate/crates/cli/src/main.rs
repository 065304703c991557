//! Binary entry point: argument parsing and exit-code mapping only.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use covsteer_cli::run::{resolve_config, run_simulate, run_solve, run_verify};

#[derive(Parser)]
#[command(
    name = "covsteer",
    version,
    about = "Minimum-energy covariance steering for linear Gauss-Markov models",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model description file (TOML)
    #[arg(long, value_name = "FILE", conflicts_with = "example", required_unless_present = "example")]
    config: Option<PathBuf>,

    /// Built-in example model (available: ou)
    #[arg(long, value_name = "NAME")]
    example: Option<String>,

    /// Number of time-grid intervals
    #[arg(long, default_value_t = 1000, value_name = "N")]
    steps: usize,
}

#[derive(Args)]
struct OutArgs {
    /// Directory for output files (created if missing)
    #[arg(long, default_value = "out", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the steering problem and write the solution artifacts
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Solve, then validate the policy by closed-loop Monte Carlo
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Ensemble seed; identical seeds reproduce byte-identical files
        #[arg(long, default_value_t = 42, value_name = "S")]
        seed: u64,
        /// Number of sample paths
        #[arg(long, default_value_t = 1000, value_name = "P")]
        paths: usize,
        /// Keep every k-th simulation node in trajectories.csv
        #[arg(long, default_value_t = 10, value_name = "K")]
        store_every: usize,
    },
    /// Solve and print the full residual table
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// Perturb the multiplier before checking, forcing a failure (test hook)
        #[arg(long, hide = true)]
        corrupt_multiplier: bool,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve { model, out } => resolve_config(model.config.as_deref(), model.example.as_deref())
            .and_then(|config| run_solve(&config, model.steps, &out.out)),
        Command::Simulate { model, out, seed, paths, store_every } => {
            resolve_config(model.config.as_deref(), model.example.as_deref()).and_then(|config| {
                run_simulate(&config, model.steps, &out.out, seed, paths, store_every)
            })
        }
        Command::Verify { model, corrupt_multiplier } => {
            resolve_config(model.config.as_deref(), model.example.as_deref())
                .and_then(|config| run_verify(&config, model.steps, corrupt_multiplier))
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
