//! The `mmtts` command-line tool.
//!
//! Human-readable output goes to stdout (including log lines). Failures
//! print a single JSON object `{"kind": ..., "message": ...}` on stderr and
//! exit with one of the [`exit`] codes.

use std::ffi::OsString;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;
pub mod verify;

pub use config::{DataConfig, Preset, RunConfig};

pub mod exit {
    pub const OK: i32 = 0;
    pub const DOMAIN: i32 = 2;
    pub const USAGE: i32 = 64;
    pub const INTERNAL: i32 = 70;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mmtts::Error),
    #[error("{0}")]
    Usage(String),
    /// A command ran but its checks did not pass.
    #[error("{message}")]
    Failed { kind: &'static str, message: String },
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Failed { kind, .. } => kind,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            // shape errors from the tensor layer are bugs, not bad input
            CliError::Core(mmtts::Error::Tensor(_)) => exit::INTERNAL,
            CliError::Core(_) | CliError::Failed { .. } => exit::DOMAIN,
            CliError::Usage(_) => exit::USAGE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn error_json(kind: &str, message: &str) -> String {
    serde_json::json!({ "kind": kind, "message": message }).to_string()
}

#[derive(Debug, Parser)]
#[command(name = "mmtts", version, about = "Multilingual multi-speaker text-to-speech")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override one configuration key, e.g. `--set train.batch_size=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the phoneme sequence of a text.
    Phonemize(commands::PhonemizeArgs),
    /// Validate a corpus and cache its spectrograms.
    Prepare(commands::PrepareArgs),
    /// Train a model from scratch (or resume a checkpoint).
    Train(commands::TrainArgs),
    /// Add new speakers to a trained model and fine-tune on their data.
    Finetune(commands::FinetuneArgs),
    /// Synthesize one utterance to a WAV file.
    Synth(commands::SynthArgs),
    /// Run the built-in invariant checks.
    Verify(commands::VerifyArgs),
    /// Write the synthetic desk corpus.
    GenerateCorpus(commands::GenerateCorpusArgs),
}

fn init_logging() {
    let env = env_logger::Env::default().default_filter_or("info");
    let _ = env_logger::Builder::from_env(env)
        .target(env_logger::Target::Stdout)
        .format_timestamp(None)
        .try_init();
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    exit::OK
                }
                _ => {
                    let text = e.render().to_string();
                    eprintln!("{}", error_json("usage", text.trim()));
                    exit::USAGE
                }
            };
        }
    };
    init_logging();
    match catch_unwind(AssertUnwindSafe(|| commands::dispatch(cli.command))) {
        Ok(Ok(())) => exit::OK,
        Ok(Err(e)) => {
            eprintln!("{}", error_json(e.kind(), &e.to_string()));
            e.exit_code()
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            eprintln!("{}", error_json("internal", &message));
            exit::INTERNAL
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let domain = CliError::from(mmtts::Error::UnknownSpeaker("x".into()));
        assert_eq!((domain.kind(), domain.exit_code()), ("unknown-speaker", exit::DOMAIN));
        let usage = CliError::Usage("no manifest".into());
        assert_eq!((usage.kind(), usage.exit_code()), ("usage", exit::USAGE));
        let internal = CliError::from(mmtts::Error::Tensor(mmtts_tensor::TensorError::UnknownParam("x".into())));
        assert_eq!(internal.exit_code(), exit::INTERNAL);
    }

    #[test]
    fn error_json_is_parseable() {
        let v: serde_json::Value = serde_json::from_str(&error_json("config", "bad \"key\"\nline")).unwrap();
        assert_eq!(v["kind"], "config");
        assert_eq!(v["message"], "bad \"key\"\nline");
    }

    #[test]
    fn bad_arguments_are_usage_errors() {
        assert_eq!(run(["mmtts", "verify", "nonsense"]), exit::USAGE);
        assert_eq!(run(["mmtts", "finetune", "--out", "x.ckpt"]), exit::USAGE);
        assert_eq!(run(["mmtts"]), exit::USAGE);
        assert_eq!(run(["mmtts", "--help"]), exit::OK);
    }
}
