//! Command-line front end for the emojinet classifiers.
//!
//! ```text
//! emojinet check-data  --data-dir data/emoji
//! emojinet build-vocab --data-dir data/emoji --out runs/vocab.txt
//! emojinet train       --data-dir data/emoji --arch cnn --preset paper --seed 1 --out runs/cnn
//! emojinet evaluate    --checkpoint runs/cnn/model.ckpt --split test --limit 10000
//! emojinet compare     --data-dir data/emoji --out runs/compare
//! ```
//!
//! Exit status is 0 on success, 1 when a command fails while running and
//! 2 for usage errors.

pub mod commands;
pub mod config;
mod error;

use std::path::PathBuf;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use emojinet::corpus::Split;
use emojinet::losses::LossKind;
use emojinet::models::Arch;
use emojinet::tokenizer::DEFAULT_MIN_FREQ;

pub use error::{CliError, Result};

use commands::EvaluateArgs;
use config::{RunConfig, Settings};

fn arch_parser() -> impl TypedValueParser<Value = Arch> {
    PossibleValuesParser::new(Arch::ALL.map(Arch::name)).map(|s| s.parse::<Arch>().expect("listed value"))
}

fn loss_parser() -> impl TypedValueParser<Value = LossKind> {
    PossibleValuesParser::new(["ce", "wce", "focal"]).map(|s| s.parse::<LossKind>().expect("listed value"))
}

fn split_parser() -> impl TypedValueParser<Value = Split> {
    PossibleValuesParser::new(["train", "validation", "test"]).map(|s| s.parse::<Split>().expect("listed value"))
}

#[derive(Debug, Parser)]
#[command(name = "emojinet", version, about = "Predict the emoji of a tweet: data checks, training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print split sizes and label counts; fails if a label is absent from train.
    CheckData {
        #[arg(long)]
        data_dir: PathBuf,
    },
    /// Build the token vocabulary from the train split.
    BuildVocab {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_FREQ)]
        min_freq: usize,
        /// Use only the first N training examples.
        #[arg(long)]
        limit_train: Option<usize>,
        /// Output file.
        #[arg(long, default_value = "vocab.txt")]
        out: PathBuf,
    },
    /// Train one model and evaluate it on the test split.
    Train {
        #[arg(long, value_parser = arch_parser())]
        arch: Option<Arch>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluate a checkpoint on one split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Defaults to the data directory the model was trained on.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, value_parser = split_parser(), default_value = "test")]
        split: Split,
        /// Evaluate only the first N examples of the split.
        #[arg(long)]
        limit: Option<usize>,
        /// Defaults to vocab.txt next to the checkpoint.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Defaults to the checkpoint's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every architecture in turn and tabulate their test metrics.
    Compare {
        /// Comma-separated subset of architectures (default: all).
        #[arg(long, value_parser = arch_parser(), value_delimiter = ',')]
        archs: Vec<Arch>,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Options shared by `train` and `compare`. Unset options fall back to the
/// config file, then to the preset.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// `key = value` file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = loss_parser())]
    pub loss: Option<LossKind>,
    /// Train on the first N training examples only.
    #[arg(long)]
    pub limit_train: Option<usize>,
    /// Report on the first N test examples only.
    #[arg(long)]
    pub limit_test: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    /// Config file settings overlaid with the flags given here.
    pub fn settings(&self, arch: Option<Arch>) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        let flags = Settings {
            data_dir: self.data_dir.clone(),
            out: self.out.clone(),
            arch,
            preset: self.preset.clone(),
            seed: self.seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            weight_decay: self.weight_decay,
            loss: self.loss,
            gamma: self.gamma,
            limit_train: self.limit_train.map(Some),
            limit_test: self.limit_test.map(Some),
            ..Settings::default()
        };
        Ok(file.overlay(flags))
    }
}

/// Writes to stdout; a closed pipe (`emojinet … | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io {
            path: "<stdout>".into(),
            source: e,
        }),
        _ => Ok(()),
    }
}

/// Runs a parsed command, printing its results to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CheckData { data_dir } => {
            let summary = commands::check_data(&data_dir)?;
            emit(&summary.to_string())?;
            if !summary.missing_train_labels.is_empty() {
                let names: Vec<&str> = summary
                    .missing_train_labels
                    .iter()
                    .map(|&c| summary.labels[c].as_str())
                    .collect();
                return Err(CliError::Data(format!("labels absent from train split: {}", names.join(", "))));
            }
        }
        Command::BuildVocab {
            data_dir,
            min_freq,
            limit_train,
            out,
        } => {
            if min_freq == 0 {
                return Err(CliError::Usage("--min-freq must be at least 1".into()));
            }
            let vocab = commands::build_vocab(&data_dir, min_freq, limit_train, &out)?;
            emit(&format!("{} tokens written to {} (sha256 {})\n", vocab.len(), out.display(), vocab.hash()))?;
        }
        Command::Train { arch, run } => {
            let cfg = RunConfig::resolve(&run.settings(arch)?)?;
            let result = commands::train(&cfg)?;
            emit(&result.test.report.to_text())?;
            emit(&format!("artifacts written to {}\n", cfg.out.display()))?;
        }
        Command::Evaluate {
            checkpoint,
            data_dir,
            split,
            limit,
            vocab,
            out,
        } => {
            let a = commands::evaluate(&EvaluateArgs {
                checkpoint,
                data_dir,
                split,
                limit,
                vocab,
                out,
            })?;
            emit(&a.report.to_text())?;
        }
        Command::Compare { archs, run } => {
            let archs = if archs.is_empty() { Arch::ALL.to_vec() } else { archs };
            let rows = commands::compare(&run.settings(None)?, &archs)?;
            emit(&commands::comparison_table(&rows))?;
        }
    }
    Ok(())
}
