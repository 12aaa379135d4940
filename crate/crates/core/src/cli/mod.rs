//! Command-line front end.
//!
//! Settings come from a flat `key = value` file (`--config`) with `model.`,
//! `train.`, `data.` and `grid.` prefixes; `--set key=value` and the named
//! flags override it. Exit codes: 0 success, 1 failed verification, 2 usage
//! or configuration error, 3 runtime error.

mod config;
mod grid;
mod run;
mod synth;
mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, DEFAULT_SPLIT};
pub use grid::{GridRow, GridSpec};

use crate::error::Error;
use crate::oracle::{analytic_gradient, GradientFn};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "xdeepfm", version, about = "Train, evaluate and verify CIN-based CTR models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model; writes model.ckpt, history.jsonl and eval.json.
    Train(TrainArgs),
    /// Score a dataset with a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Train every combination of a hyper-parameter grid.
    Gridsearch(TrainArgs),
    /// Run the brute-force verifiers.
    Verify(VerifyArgs),
    /// Generate a synthetic dataset and its manifest.
    Synthesize(SynthArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set model.preset=fm`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Training CSV (`data.train`).
    #[arg(long = "data.train", alias = "train")]
    pub train: Option<PathBuf>,
    /// Validation CSV (`data.valid`).
    #[arg(long = "data.valid", alias = "valid")]
    pub valid: Option<PathBuf>,
    /// Test CSV (`data.test`).
    #[arg(long = "data.test", alias = "test")]
    pub test: Option<PathBuf>,
    /// Single CSV split 8:1:1 into train/valid/test (`data.path`).
    #[arg(long = "data.path", alias = "data")]
    pub data: Option<PathBuf>,
    /// Schema config (`data.schema`); without it every column but the label
    /// is a univalent field.
    #[arg(long = "data.schema", alias = "schema")]
    pub schema: Option<PathBuf>,
    /// Model preset (`model.preset`).
    #[arg(long = "model.preset", alias = "model")]
    pub preset: Option<String>,
    /// Epoch limit (`train.epochs`).
    #[arg(long = "train.epochs", alias = "epochs")]
    pub epochs: Option<usize>,
    /// Seed (`train.seed`).
    #[arg(long = "train.seed", alias = "seed")]
    pub seed: Option<u64>,
    /// Output directory (`out`).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Report per-epoch seconds spent in the CIN and DNN parts.
    #[arg(long)]
    pub bench: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// CSV to score.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the report; standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Comma-separated subset of collinearity, polynomial, params,
    /// fm_reduction, gradients. All when omitted; none when empty.
    #[arg(long)]
    pub checks: Option<String>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Synthetic spec file.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output CSV.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Manifest JSON; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Replaceable internals, for fault-injection tests.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub gradient: GradientFn,
}

impl Default for Hooks {
    fn default() -> Self {
        Hooks {
            gradient: analytic_gradient,
        }
    }
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Parse { .. } | Error::Split(_) | Error::Argument(_) => {
                EXIT_USAGE
            }
            _ => EXIT_RUNTIME,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first) and runs the command, writing reports
/// to `stdout`. Returns the process exit code.
pub fn run_with_hooks<I, T>(args: I, hooks: Hooks, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => run::cmd_train(&a),
        Command::Evaluate(a) => run::cmd_evaluate(&a, stdout),
        Command::Gridsearch(a) => grid::cmd_gridsearch(&a),
        Command::Verify(a) => verify::cmd_verify(&a, hooks, stdout),
        Command::Synthesize(a) => synth::cmd_synthesize(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_with_hooks(args, Hooks::default(), &mut lock)
}
