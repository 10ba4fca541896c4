//! `gml`: unsupervised entity resolution by gradual machine learning.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::commands::Thresholds;
use crate::config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "gml", version, about = "Unsupervised entity resolution by gradual machine learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label every candidate pair and write labels, trail, fits and metrics.
    Run {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Check that equivalence grows with record similarity and score the easy labels.
    Diagnose {
        #[command(flatten)]
        flags: Overrides,
        /// Also score the fixed rule `similarity >= LOWERBOUND -> matching`.
        #[arg(long)]
        lowerbound: Option<f64>,
        /// Also score the fixed rule `similarity <= UPPERBOUND -> unmatching`.
        #[arg(long)]
        upperbound: Option<f64>,
    },
    /// Score a labels file against gold labels.
    Eval {
        labels: PathBuf,
        gold: PathBuf,
        /// Directory for metrics.txt; printed only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { flags } => {
            let config = RunConfig::load(&flags)?;
            commands::run(&config)?;
        }
        Command::Diagnose {
            flags,
            lowerbound,
            upperbound,
        } => {
            let config = RunConfig::load(&flags)?;
            commands::diagnose(&config, Thresholds { lowerbound, upperbound })?;
        }
        Command::Eval { labels, gold, out } => commands::eval(&labels, &gold, out.as_deref())?,
    }
    Ok(())
}

/// Exit status of the first library error in the chain; anything else is a runtime failure.
fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<gml_core::Error>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(4)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
