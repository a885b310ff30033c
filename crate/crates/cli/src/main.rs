use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use idr_core::ErrorClass;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "idr", version, about = "Incentive-based demand response with independent DQN agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every run command. Values given here override the
/// config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (also seeds the synthetic data generator).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Day range, `A..B` (indices, half-open) or `YYYY-MM-DD..YYYY-MM-DD`.
    /// Training days for `train`, evaluation days otherwise.
    #[arg(long, value_name = "RANGE")]
    pub days: Option<String>,
    /// Dataset CSV; synthetic data is generated when absent.
    #[arg(long, value_name = "PATH")]
    pub data: Option<PathBuf>,
    /// Number of synthetic households.
    #[arg(long)]
    pub households: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Policy {
    Nodr,
    Myopic,
    Marl,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::Nodr => "nodr",
            Policy::Myopic => "myopic",
            Policy::Marl => "marl",
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset CSV.
    GenerateData(#[command(flatten)] Common),
    /// Train the aggregator and participant agents.
    Train(#[command(flatten)] Common),
    /// Evaluate policies on the evaluation days.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Policies to evaluate (comma separated).
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Policy::Nodr, Policy::Myopic, Policy::Marl])]
        policy: Vec<Policy>,
        /// Checkpoint directory for the learned policy [default: OUT/checkpoints].
        #[arg(long, value_name = "DIR")]
        checkpoints: Option<PathBuf>,
    },
    /// Train and evaluate once per aggregator weighting value.
    RhoSweep {
        #[command(flatten)]
        common: Common,
        /// Weighting values (comma separated); the config list when absent.
        #[arg(long, value_delimiter = ',')]
        rho: Vec<f64>,
    },
    /// Print the metrics table of an evaluation directory.
    Report {
        /// Directory written by `eval` or `rho-sweep`.
        #[arg(value_name = "DIR")]
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("IDR_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenerateData(common) => commands::generate_data(&common),
        Command::Train(common) => commands::train(&common),
        Command::Eval {
            common,
            policy,
            checkpoints,
        } => commands::eval(&common, &policy, checkpoints),
        Command::RhoSweep { common, rho } => commands::rho_sweep(&common, &rho),
        Command::Report { dir } => commands::report(&dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numeric => 3,
            })
        }
    }
}
