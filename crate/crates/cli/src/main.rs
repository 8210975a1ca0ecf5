//! `pad`: synthesize, preprocess, split, train, score, evaluate and time the
//! fingerprint presentation attack detector.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::Context;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pad", version, about = "One-class fingerprint presentation attack detection")]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Overrides the master seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subset {
    Test,
    Val,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render the synthetic corpus into the data directory.
    Synth,
    /// Extract ROI triplets for every manifest record.
    Preprocess,
    /// Build the protocol split.
    Split,
    /// Train one model, or all five when no view is given.
    Train {
        #[arg(long, value_parser = ["direct", "raw", "processed", "patch", "vae"])]
        view: Option<String>,
    },
    /// Score a subset with the trained bundle.
    Score {
        #[arg(long, value_enum, default_value_t = Subset::Test)]
        subset: Subset,
    },
    /// Per-material TDR at a fixed FDR from the score table.
    Eval {
        /// Target FDR; defaults to the configured value.
        #[arg(long)]
        fdr: Option<f64>,
    },
    /// Time the scoring stages on one capture.
    Bench {
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Export view features of the test subset and their PCA scatter.
    Features,
    /// synth (when configured), preprocess, split, train, score and eval.
    Pipeline,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::config("--config <path> is required"))?;
    let ctx = Context::new(&path, cli.seed)?;
    pad_core::par::with_workers(cli.workers, || match cli.command {
        Command::Synth => ctx.synth(),
        Command::Preprocess => ctx.preprocess(),
        Command::Split => ctx.split(),
        Command::Train { view } => ctx.train(view.as_deref()),
        Command::Score { subset } => ctx.score(subset),
        Command::Eval { fdr } => ctx.eval(fdr),
        Command::Bench { runs } => ctx.bench(runs),
        Command::Features => ctx.features(),
        Command::Pipeline => ctx.pipeline(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.code).unwrap_or(1))
        }
    }
}
