//! Command-line runner for cellbranch experiments.
//!
//! Every run writes its artifacts and a `manifest.json` into the output
//! directory, chosen by `--out`, then `CELLBRANCH_OUT`, then the config's
//! `output.dir`, then `cellbranch-out`.

mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "cellbranch", version, about = "Branching processes in random environment on the cell division tree")]
struct Cli {
    /// Master seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "CELLBRANCH_OUT")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report the regime (ergodic, critical, transient) of a model.
    Classify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate paths of the random cell line.
    Lineage {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate whole division trees and write per-generation ledgers.
    Tree {
        #[arg(long)]
        config: PathBuf,
        /// Initial parasite count, overriding the config's `k0`.
        #[arg(long)]
        k0: Option<u64>,
    },
    /// Exact laws on the truncated state space.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        /// Also write the full transition matrix.
        #[arg(long)]
        kernel: bool,
    },
    /// Run an acceptance suite.
    Verify {
        suite: String,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global() {
            log::warn!("could not size the worker pool: {e}");
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{message}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let opts = run::Options {
        seed: cli.seed,
        out: cli.out,
    };
    match cli.command {
        Command::Classify { config } => run::classify(&opts, &config),
        Command::Lineage { config } => run::lineage(&opts, &config),
        Command::Tree { config, k0 } => run::tree(&opts, &config, k0),
        Command::Oracle { config, kernel } => run::oracle(&opts, &config, kernel),
        Command::Verify { suite, config } => run::verify(&opts, &suite, config.as_deref()),
    }
}
