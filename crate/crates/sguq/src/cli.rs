//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::LoadedConfig;
use crate::external::serve_builtin;
use crate::run::{execute, Command, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "sguq", version, about = "Sparse-grid uncertainty quantification workflow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Sobol sensitivity analysis and parameter screening.
    Gsa(StageArgs),
    /// Bayesian inversion: MAP, Laplace covariance, profiles, posterior.
    Invert(StageArgs),
    /// Posterior propagation to per-location densities and bands.
    Forward(StageArgs),
    /// gsa, invert and forward in sequence.
    Pipeline(StageArgs),
    /// Answers one params.csv request with a builtin model (external-protocol stub).
    #[command(hide = true)]
    BuiltinSolver {
        name: String,
        params: PathBuf,
        qoi: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct StageArgs {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Validate surrogates against extra model runs.
    #[arg(long)]
    pub validate: bool,
    /// Also propagate the prior for band comparison.
    #[arg(long)]
    pub compare_prior: bool,
    /// Run directory (default run/<timestamp>).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs the parsed command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let (command, args) = match cli.command {
        Sub::BuiltinSolver { name, params, qoi } => {
            return match serve_builtin(&name, &params, &qoi) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("builtin-solver: {e}");
                    1
                }
            };
        }
        Sub::Gsa(a) => (Command::Gsa, a),
        Sub::Invert(a) => (Command::Invert, a),
        Sub::Forward(a) => (Command::Forward, a),
        Sub::Pipeline(a) => (Command::Pipeline, a),
    };
    let loaded = match LoadedConfig::read(&args.config) {
        Ok(l) => l,
        Err(e) => {
            log::error!("{e}");
            return e.exit_code();
        }
    };
    let options = RunOptions {
        command,
        validate: args.validate,
        compare_prior: args.compare_prior,
        out: args.out,
    };
    match execute(&loaded, &options) {
        Ok((dir, manifest)) => {
            log::info!(
                "done: {} model evaluations ({} grid, {} validation), outputs in {}",
                manifest.model_evaluations,
                manifest.grid_evaluations,
                manifest.validation_evaluations,
                dir.display()
            );
            0
        }
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
