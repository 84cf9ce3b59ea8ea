mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RunConfig};

/// Exit status for bad usage or configuration.
const EXIT_USAGE: u8 = 64;
/// Exit status for unreadable or invalid input data.
const EXIT_DATA: u8 = 65;
/// Some records failed while the rest were processed.
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "misswrite", version, about = "Detect diagnoses missing from discharge lists")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct GlobalArgs {
    /// `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for batch detection.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    /// Override a config key, e.g. `--set context.epochs=3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus with gold labels and training files.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the contrastive pretraining pair set.
    GenPairs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `diagnosis,code` CSV of coded records.
        #[arg(long)]
        coded: Option<PathBuf>,
        /// Extra synonym pairs, one `a<TAB>b` per line.
        #[arg(long)]
        back_translation: Option<PathBuf>,
    },
    /// Train the context classifier on labeled contexts (JSONL).
    TrainContext {
        #[arg(long)]
        contexts: PathBuf,
        /// Model directory; `context.bin` is written there.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the disease relation comparator.
    TrainRelation {
        /// Labeled pairs (TSV).
        #[arg(long)]
        pairs: PathBuf,
        /// Pretraining pairs from `gen-pairs`.
        #[arg(long)]
        pretrain: Option<PathBuf>,
        /// Model directory; `relation.bin` is written there.
        #[arg(long)]
        out: PathBuf,
    },
    /// Find write-missing diagnoses in a corpus.
    Detect {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score findings against gold mentions.
    Evaluate {
        #[arg(long)]
        findings: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Score the full pipeline and its ablations.
    Ablate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        models: PathBuf,
        /// CSV of scores per configuration.
        #[arg(long)]
        out: PathBuf,
    },
    /// Regroup DRGs with the recovered diagnoses and report cost deltas.
    DrgImpact {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        findings: PathBuf,
        /// Model directory whose relation model resolves ICD codes.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Detection precision used to discount the total.
        #[arg(long)]
        precision: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] misswrite_core::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Partial(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Partial(_) => EXIT_PARTIAL,
        }
    }
}

fn resolve_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &global.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&global.sets)?;
    if let Some(seed) = global.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(p) = global.parallelism {
        cfg.set("parallelism", &p.to_string())?;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = resolve_config(&cli.global).and_then(|cfg| commands::run(cli.command, &cfg));
    match outcome {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
