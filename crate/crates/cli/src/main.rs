//! `scres`: generate worlds, run simulations and experiments, fit and query
//! the weight surrogate.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "scres", version, about = "Supply-chain resilience under epidemics")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Experiment config or scenario spec (JSON)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config's seed
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR", default_value = "scres-out")]
    pub out: PathBuf,
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, value_name = "N", default_value_t = 0)]
    pub jobs: usize,
    /// Suppress progress messages
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Debug, Clone, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Generate a world from the scenario
    Gen,
    /// Simulate one world
    Sim {
        /// Steps to simulate (defaults to the scenario horizon)
        #[arg(long)]
        horizon: Option<u32>,
        /// Run without the pandemic
        #[arg(long)]
        baseline: bool,
    },
    /// Compare strategy modes over paired runs
    Compare {
        #[arg(long)]
        repetitions: Option<u32>,
    },
    /// Sensitivity of the best profit weight to a scenario parameter
    Sweep {
        /// Parameter to sweep (repeatable); defaults to the config's sweeps or all
        #[arg(long = "param")]
        params: Vec<String>,
        /// Comma-separated grid values (with a single --param)
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Grid points when values are not given
        #[arg(long, default_value_t = 6)]
        points: usize,
        /// Worlds per grid value
        #[arg(long, default_value_t = 20)]
        repetitions: u32,
    },
    /// Generate surrogate training rows and labels
    Dataset {
        #[arg(long)]
        sims: Option<u32>,
    },
    /// Fit the score surrogate by cross-validation
    Fit {
        /// Dataset CSV written by `dataset`
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Recommend a profit weight for each row of a features file
    Recommend {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        features: PathBuf,
        /// Weights tried on [0, 1]
        #[arg(long, default_value_t = 101)]
        resolution: usize,
    },
    /// Shapley attribution of one prediction
    Attribute {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        features: PathBuf,
        /// Row of the features file to explain
        #[arg(long, default_value_t = 0)]
        row: usize,
        /// Profit weight to explain at; required if the file has no w1 column
        #[arg(long)]
        w1: Option<f64>,
        #[arg(long, default_value_t = 500)]
        permutations: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Sim { .. } => "sim",
            Command::Compare { .. } => "compare",
            Command::Sweep { .. } => "sweep",
            Command::Dataset { .. } => "dataset",
            Command::Fit { .. } => "fit",
            Command::Recommend { .. } => "recommend",
            Command::Attribute { .. } => "attribute",
        }
    }
}

/// Why a command failed, which decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad configuration, arguments or input files.
    User(String),
    /// Anything that went wrong while running.
    Runtime(String),
}

impl From<sc_resilience::Error> for Failure {
    fn from(e: sc_resilience::Error) -> Self {
        if e.is_user_error() {
            Failure::User(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Help and version exit 0; every other parse error prints usage and exits 2.
        Err(e) => e.exit(),
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
