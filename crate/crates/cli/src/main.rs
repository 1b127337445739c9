mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use malxai::models::ModelKind;

use config::{Balance, Method};

/// Process exit status with a message for stderr.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<malxai::Error> for CliError {
    fn from(e: malxai::Error) -> Self {
        match e {
            malxai::Error::Diverged { .. } => Self { code: 3, message: e.to_string() },
            _ => Self::data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "malxai", version, about = "Train, sweep and explain API-call sequence malware classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Dataset CSV (overrides `data.path`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Root directory for run outputs (overrides `out_dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and explainer batches.
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// Replace the model section with the default architecture of this kind.
    #[arg(long, value_parser = parse_kind)]
    pub model: Option<ModelKind>,
    #[arg(long, value_enum)]
    pub balance: Option<Balance>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and evaluate it on the held-out split.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Explain one sample with LIME and/or SHAP.
    Explain {
        #[command(flatten)]
        common: Common,
        /// Weight file written by `train`.
        #[arg(long)]
        weights: PathBuf,
        /// `index:<row>` or `hash:<md5>`.
        #[arg(long)]
        sample: Option<String>,
        #[arg(long, value_enum)]
        method: Vec<MethodArg>,
    },
    /// Run the dataset-composition grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Grid TOML with `[[cell]]` tables.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Write a synthetic dataset CSV.
    Synth {
        #[arg(long)]
        malware: usize,
        #[arg(long)]
        benign: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the summary of a finished run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum MethodArg {
    Lime,
    Shap,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Lime => Method::Lime,
            MethodArg::Shap => Method::Shap,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { common } => commands::train(&common),
        Command::Explain { common, weights, sample, method } => {
            commands::explain(&common, &weights, sample, method.into_iter().map(Method::from).collect())
        }
        Command::Sweep { common, grid } => commands::sweep(&common, grid),
        Command::Synth { malware, benign, seed, out } => commands::synth(malware, benign, seed, &out),
        Command::Report { run } => commands::report(&run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
