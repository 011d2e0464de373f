//! Library side of the `smattn` command-line tool: run configuration, the six
//! subcommands, run manifests and the multi-seed stress experiment.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{RosterEntry, RunConfig, StressConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "smattn", version, about = "Stepwise monotonic attention toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default `smattn-out/<command>`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Run seed for training and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the train, held-out and stress splits as JSON lines.
    Gen {
        #[command(flatten)]
        common: Common,
    },
    /// Train one toy model and write its checkpoint and loss curve.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory from `gen` (or a .jsonl file); generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Free-running decoding with a trained checkpoint.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON-lines dataset; when omitted the `--split` split is generated.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value = "heldout")]
        split: String,
    },
    /// Classify the alignments written by `infer`.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// `infer` output directory or its index.jsonl.
        #[arg(long)]
        input: PathBuf,
    },
    /// Check the alignment recursions against exact enumeration.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Number of random instances per sweep.
        #[arg(long)]
        random: Option<usize>,
        /// CSV file of selection probabilities, one decoder step per line.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Hard-decoder samples for `--matrix`.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Compare mechanisms on the stress split.
    Stress {
        #[command(flatten)]
        common: Common,
        /// `path[:mode]` of a trained checkpoint; repeatable. Trains the
        /// configured roster when omitted.
        #[arg(long)]
        checkpoint: Vec<String>,
        /// Also write every trained model.
        #[arg(long)]
        keep_models: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen { .. } => "gen",
            Command::Train { .. } => "train",
            Command::Infer { .. } => "infer",
            Command::Diagnose { .. } => "diagnose",
            Command::Oracle { .. } => "oracle",
            Command::Stress { .. } => "stress",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Gen { common }
            | Command::Train { common, .. }
            | Command::Infer { common, .. }
            | Command::Diagnose { common, .. }
            | Command::Oracle { common, .. }
            | Command::Stress { common, .. } => common,
        }
    }
}

pub fn run(command: &Command) -> CliResult<()> {
    let common = command.common();
    let base = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let config = base.resolve(common.seed, common.out.clone(), command.name());
    config.validate()?;
    match command {
        Command::Gen { .. } => commands::cmd_gen(&config),
        Command::Train { data, .. } => commands::cmd_train(&config, data.as_deref()),
        Command::Infer { checkpoint, input, split, .. } => {
            commands::cmd_infer(&config, checkpoint, input.as_deref(), split)
        }
        Command::Diagnose { input, .. } => commands::cmd_diagnose(&config, input),
        Command::Oracle { random, matrix, samples, .. } => {
            commands::cmd_oracle(&config, *random, matrix.as_deref(), *samples)
        }
        Command::Stress { checkpoint, keep_models, .. } => commands::cmd_stress(&config, checkpoint, *keep_models),
    }
}
