//! Command-line front end for `brp-cfo`: preamble design, bounds, Monte Carlo
//! sweeps, plotting tables and the `Gamma` diagnostic.
//!
//! Every subcommand reads an optional TOML configuration, applies command-line
//! overrides, writes its results plus `effective_config.toml` into the output
//! directory and prints a JSON summary on standard output.

pub mod commands;
pub mod config;
pub mod error;
pub mod json;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::commands::{Outputs, EFFECTIVE_CONFIG};
use crate::config::{CliConfig, Overrides};
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "brp-cfo", version, about = "Block-rotated preambles for two-way relay CFO estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory (default: experiment.output_dir).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Master seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Monte Carlo trials per SNR point.
    #[arg(long, global = true)]
    pub trials: Option<usize>,

    /// SNR grid in dB: `start:step:stop` or a comma-separated list.
    #[arg(long, global = true, value_name = "GRID", allow_hyphen_values = true)]
    pub snr: Option<String>,

    /// Override any configuration key, e.g. `--set system.snr_db=20`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Basis blocks and rotation angles for both sources.
    Design,
    /// Genie-aided, modified, approximate and averaged bounds.
    Bounds,
    /// MSE of both estimators against the bounds over an SNR grid.
    Sweep,
    /// Degradation-function and heuristic-angle tables.
    Tables,
    /// Near-diagonality of the averaged inverse noise covariance.
    Gamma,
}

impl Cli {
    pub fn overrides(&self) -> Overrides {
        Overrides { set: self.set.clone(), seed: self.seed, trials: self.trials, snr: self.snr.clone() }
    }
}

/// Run one subcommand and return its JSON summary.
pub fn run(cli: &Cli) -> CliResult<Value> {
    let mut config = CliConfig::load(cli.config.as_deref(), &cli.overrides())?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from(&config.experiment.output_dir));
    config.experiment.output_dir = dir.display().to_string();
    let mut out = Outputs::create(&dir)?;
    let mut summary = match cli.command {
        Command::Design => commands::design(&config, &mut out)?,
        Command::Bounds => commands::bounds(&config, &mut out)?,
        Command::Sweep => commands::sweep(&config, &mut out)?,
        Command::Tables => commands::tables(&config, &mut out)?,
        Command::Gamma => commands::gamma(&config, &mut out)?,
    };
    out.write(EFFECTIVE_CONFIG, &config.to_toml()?)?;
    if let Value::Object(map) = &mut summary {
        map.insert("files".into(), out.files());
    }
    Ok(summary)
}
