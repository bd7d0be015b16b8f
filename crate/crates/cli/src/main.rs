//! `zpl-qe`: simulate, analyze and report saturation-based quantum-efficiency
//! measurements of single emitters.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
//! failure. The `ZPLQE_LOG` environment variable controls log verbosity
//! (error, warn, info, debug, trace).

// `!(x > 0.0)` guards also reject NaN; `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod io;
mod svg;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use config::{Mode, RunConfig};
use error::CliError;

#[derive(Parser)]
#[command(
    name = "zpl-qe",
    about = "Quantum-efficiency extraction for single two-level emitters from saturation measurements",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic measurement files from ground-truth parameters.
    Simulate(CommonArgs),
    /// Fit a dataset and extract both effective-QE values per molecule.
    Analyze(CommonArgs),
    /// Plot and summarize an analyzed ensemble.
    Report(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-molecule parallelism (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Re-read every output file and verify it against its schema.
    #[arg(long)]
    validate_schemas: bool,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Simulate(a) | Command::Analyze(a) | Command::Report(a) => a,
        }
    }

    fn mode(&self) -> Mode {
        match self {
            Command::Simulate(_) => Mode::Simulate,
            Command::Analyze(_) => Mode::Analyze,
            Command::Report(_) => Mode::Report,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let args = cli.command.args();
    if let Some(jobs) = args.jobs {
        if jobs == 0 {
            return Err(CliError::config("--jobs must be at least 1"));
        }
        // Build the global pool once; per-molecule outputs are collected in
        // index order, so results do not depend on the worker count.
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::config(format!("--jobs: {e}")))?;
    }

    let mut config = config::load_config(&args.config)?;
    if config.mode() != cli.command.mode() {
        return Err(CliError::config(format!(
            "config file has mode = \"{}\" but the `{}` subcommand was invoked",
            config.mode(),
            cli.command.mode()
        )));
    }
    if let Some(seed) = args.seed {
        match &mut config {
            RunConfig::Simulate(c) => c.seed = seed,
            RunConfig::Analyze(c) => c.bootstrap_seed = seed,
            RunConfig::Report(_) => {
                return Err(CliError::config("--seed has no effect on `report`"))
            }
        }
    }

    match &config {
        RunConfig::Simulate(c) => commands::simulate::run(c, args.validate_schemas),
        RunConfig::Analyze(c) => commands::analyze::run(c, args.validate_schemas),
        RunConfig::Report(c) => commands::report::run(c, args.validate_schemas),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("ZPLQE_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
