//! The `oracle4rec` command: preprocessing, training, evaluation, ablations
//! and preference analysis.
//!
//! Exit codes: 0 on success, 1 on a runtime failure, 2 on a usage error
//! (unknown verb, flag or configuration key, or an out-of-range setting).

pub mod ablation;
pub mod args;
mod commands;

use std::fmt;

use clap::error::ErrorKind;
use clap::Parser;

pub use commands::{load_dataset, CONFIG_ECHO, DATASET_FILE, STATS_FILE};

use args::{split_overrides, Cli, Command};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(oracle4rec::Error),
}

impl From<oracle4rec::Error> for CliError {
    fn from(e: oracle4rec::Error) -> Self {
        match e {
            oracle4rec::Error::Config { .. } => CliError::Usage(e.to_string()),
            other => CliError::Run(other),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "error: {e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

/// Runs one invocation; `argv[0]` is the program name.
pub fn run(argv: Vec<String>) -> i32 {
    let (rest, overrides) = match split_overrides(argv) {
        Ok(v) => v,
        Err(m) => return report(CliError::Usage(m)),
    };
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    oracle4rec::training::configure_threads();
    let res = match &cli.command {
        Command::Prep(a) => commands::prep(a, &overrides),
        Command::Train(a) => commands::train_cmd(a, &overrides),
        Command::Eval(a) => commands::eval_cmd(a, &overrides),
        Command::Ablate(a) => commands::ablate(a, &overrides),
        Command::Analyze(_) | Command::Synth(_) if !overrides.is_empty() => {
            Err(CliError::Usage(format!(
                "this verb takes no configuration overrides (got --{})",
                overrides[0].0
            )))
        }
        Command::Analyze(a) => commands::analyze(a),
        Command::Synth(a) => commands::synth(a),
    };
    match res {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    eprintln!("{e}");
    e.exit_code()
}
