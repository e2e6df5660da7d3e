//! `iaqsim`: validate scenarios, run simulations and parameter sweeps.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | bad command line, including an unknown sweep parameter |
//! | 3 | scenario could not be parsed or is invalid |
//! | 4 | file system error |
//! | 5 | internal simulator error |

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Invalid(_) => 3,
            CliError::Io(_) => 4,
            CliError::Internal(_) => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "iaqsim", version, about = "Indoor air-quality sensor network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ScenarioArg {
    /// Preset name or path to a scenario TOML file.
    #[arg(long, short = 's', default_value = "paper-default")]
    pub scenario: String,
}

#[derive(Debug, clap::Args)]
pub struct OutputArgs {
    /// Output directory. Defaults to a directory named after the scenario
    /// and seed under the output root.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, env = "IAQSIM_OUT", default_value = "iaqsim-runs")]
    pub out_root: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a scenario and list every problem found.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
    /// Run one simulation and write its log, metrics and manifest.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Override the scenario's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run replicas over a list of parameter values.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// Parameter path, e.g. links.delivery_probability.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        replicas: u32,
        /// Base seed replica seeds are derived from.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// List the built-in scenarios.
    Presets,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { scenario } => commands::validate(&scenario),
        Command::Run { scenario, seed, output } => commands::run(&scenario, seed, &output),
        Command::Sweep { scenario, param, values, replicas, seed, jobs, output } => {
            commands::sweep(&scenario, &param, &values, replicas, seed, jobs, &output)
        }
        Command::Presets => {
            for (name, _) in iaqsim::scenario::PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
