//! `slstm`: train, evaluate and inspect tree LSTM sentiment models.
//!
//! Exit status is 0 on success, 1 on runtime or numeric failure and 2 on
//! usage errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use slstm::{LabelMask, LeafCellMode, Scope, Structure};

use crate::config::TrainFlags;

#[derive(Debug, Parser)]
#[command(
    name = "slstm",
    version,
    about = "Long short-term memory over binary parse trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and keep the checkpoint with the best dev root accuracy.
    Train {
        #[command(flatten)]
        flags: TrainFlags,
        /// Output directory for checkpoints, log and config echo.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Accuracy reports for a checkpoint on a treebank.
    Eval {
        #[command(flatten)]
        model: ModelInput,
        /// Which nodes fill the depth and length tables: roots or all.
        #[arg(long, default_value = "all", value_parser = parse_scope)]
        scope: Scope,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-node predictions as CSV.
    Predict {
        #[command(flatten)]
        model: ModelInput,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Treebank utilities.
    #[command(subcommand)]
    Data(DataCommand),
}

#[derive(Debug, Args)]
struct ModelInput {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Must match the structure the model was trained on.
    #[arg(long, default_value = "parse")]
    structure: Structure,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 3)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    trees: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    /// Check one mask only; all three by default.
    #[arg(long)]
    mask: Option<LabelMask>,
    /// Check one leaf cell mode only; copy_h by default.
    #[arg(long)]
    leaf_cell: Option<LeafCellMode>,
    /// Every leaf cell mode.
    #[arg(long, conflicts_with = "leaf_cell")]
    all_leaf_cells: bool,
    #[arg(long, default_value_t = 1e-4)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Parameters are drawn uniformly from ±scale.
    #[arg(long, default_value_t = 0.5)]
    scale: f64,
    /// Also write the reports as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum DataCommand {
    /// Tree, node and label counts as CSV.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "train")]
        split: slstm::Split,
        #[arg(long, default_value_t = config::DEFAULT_CLASSES)]
        classes: usize,
    },
    /// Parse every line and report the first error.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = config::DEFAULT_CLASSES)]
        classes: usize,
    },
    /// Rewrite every tree as a left or right chain.
    Restructure {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// chain_lr or chain_rr.
        #[arg(long)]
        structure: Structure,
    },
    /// Write a seeded synthetic treebank whose labels depend on bracketing.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        sentences: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        min_len: usize,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
    },
}

fn parse_scope(s: &str) -> Result<Scope, String> {
    match s {
        "roots" | "root" => Ok(Scope::Roots),
        "all" | "all_nodes" => Ok(Scope::AllNodes),
        other => Err(format!("unknown scope `{other}` (roots, all)")),
    }
}

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { flags, out } => commands::train(&flags, out),
        Command::Eval { model, scope, out } => commands::eval(&model, scope, &out),
        Command::Predict { model, out } => commands::predict(&model, &out),
        Command::Gradcheck(args) => commands::gradcheck(&args),
        Command::Data(cmd) => commands::data(cmd),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
