//! `tsmil`: synthetic data generation, training, evaluation, ablation and
//! attention overlays for the two-stage MIL pipeline.

mod commands;
mod config;
mod overlay;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use config::{Overrides, RunConfig};
use tsmil::synth::Split;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config values or missing prerequisites (exit 2).
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] tsmil::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tsmil", version, about = "Two-stage attention MIL on tiled synthetic slides")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic dataset into the dataset directory.
    Generate,
    /// Tile every slide and report tissue-tile counts and the colour reference.
    Preprocess,
    /// Train one variant and write its checkpoint and epoch logs.
    Train {
        /// Retrain even if the run directory already holds this variant.
        #[arg(long)]
        force: bool,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Train and test every variant over the ablation seeds.
    Ablate,
    /// Draw attention heat and selected tiles over one slide.
    Visualize {
        #[arg(long)]
        slide: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output PNG; defaults to the run's overlays directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let cfg = RunConfig::resolve(&cli.overrides)?;
    match cli.command {
        Command::Generate => commands::generate(&cfg),
        Command::Preprocess => commands::preprocess(&cfg),
        Command::Train { force } => commands::train(&cfg, force),
        Command::Eval { checkpoint, split } => commands::eval(&cfg, checkpoint.as_deref(), split.into()),
        Command::Ablate => commands::ablate(&cfg),
        Command::Visualize { slide, checkpoint, out } => {
            commands::visualize(&cfg, &slide, checkpoint.as_deref(), out.as_deref()).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
