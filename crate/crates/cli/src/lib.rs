//! `sgg`: batch rewards, GRPO advantages, SGDET evaluation and parse triage
//! over JSONL files.

use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgg_core::dataset::DatasetError;
use sgg_core::embedding::EmbeddingError;
use sgg_core::geometry::L1Scale;
use sgg_core::{ParseMode, RewardVariant};
use thiserror::Error;

mod commands;
pub mod config;
pub mod stream;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("writing output: {0}")]
    Output(#[source] io::Error),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("embeddings: {0}")]
    Embedding(#[from] EmbeddingError),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_owned(), source }
    }

    pub fn output(source: io::Error) -> Self {
        Self::Output(source)
    }

    /// 1 usage or IO, 2 empty input, 3 configuration invariant.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Io { .. } | Self::Output(_) | Self::Dataset(_) | Self::Embedding(_) => 1,
            Self::EmptyInput(_) => 2,
            Self::Config(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sgg", version, about = "Scene-graph rewards, GRPO advantages and SGDET evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus Recall, mRecall, AP@50 and Failure Rate against ground truth.
    Evaluate(EvaluateArgs),
    /// Score candidate responses, one JSONL record per input line.
    Reward(RewardArgs),
    /// Group-relative advantages and the clipped objective per group.
    Advantage(AdvantageArgs),
    /// Count parse outcomes over a file of responses.
    ParseCheck(ParseCheckArgs),
    /// Print the scene-graph generation prompt.
    Prompt(PromptArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// TOML config file; flags take precedence over its values.
    #[arg(long, env = "SGG_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Leave the run timestamp out of summary output.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Strict,
    Lenient,
}

impl From<ModeArg> for ParseMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strict => ParseMode::Strict,
            ModeArg::Lenient => ParseMode::Lenient,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Hard,
    Relax,
    Soft,
}

impl From<VariantArg> for RewardVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Hard => RewardVariant::HardRecall,
            VariantArg::Relax => RewardVariant::HardRecallRelax,
            VariantArg::Soft => RewardVariant::SoftRecall,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Normalized,
    Pixels,
}

impl From<ScaleArg> for L1Scale {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::Normalized => L1Scale::Normalized,
            ScaleArg::Pixels => L1Scale::Pixels,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth dataset (JSONL).
    #[arg(long)]
    pub gt: PathBuf,
    /// Predictions: `{image_id, response_text}` or `{image_id, graph}` per line.
    #[arg(long)]
    pub pred: PathBuf,
    /// Box match threshold (IoU >= value).
    #[arg(long, allow_negative_numbers = true)]
    pub iou_thresh: Option<f64>,
    /// Keep only the first K predicted triplets per image.
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long, value_enum)]
    pub parse_mode: Option<ModeArg>,
    /// Predicate list, one per line, always reported in the per-predicate table.
    #[arg(long)]
    pub predicates: Option<PathBuf>,
    /// Also write per-predicate recall as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct RewardArgs {
    /// Ground-truth dataset (JSONL).
    #[arg(long)]
    pub gt: PathBuf,
    /// Candidates: `{image_id, response_text}` per line.
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Box match threshold (IoU > value).
    #[arg(long, allow_negative_numbers = true)]
    pub iou_thresh: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub lambda3: Option<f64>,
    /// Word-vector text file for label similarity (relax and soft variants).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub parse_mode: Option<ModeArg>,
    /// How box L1 distances are scaled in the soft variant.
    #[arg(long, value_enum)]
    pub l1_scale: Option<ScaleArg>,
    /// Leave the format term out of the total.
    #[arg(long)]
    pub no_format: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct AdvantageArgs {
    /// Groups: `{group_id, rewards, ratios?, ref_ratios?}` per line.
    #[arg(long)]
    pub groups: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Added to the group standard deviation before dividing.
    #[arg(long, allow_negative_numbers = true)]
    pub group_floor: Option<f64>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct ParseCheckArgs {
    /// Responses: `{response_text}` per line.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long, value_enum)]
    pub parse_mode: Option<ModeArg>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct PromptArgs {
    /// Object classes, one per line. Needs --rel-classes too.
    #[arg(long)]
    pub obj_classes: Option<PathBuf>,
    /// Predicate classes, one per line. Needs --obj-classes too.
    #[arg(long)]
    pub rel_classes: Option<PathBuf>,
    #[command(flatten)]
    pub common: CommonArgs,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Reward(args) => commands::reward(&args),
        Command::Advantage(args) => commands::advantage(&args),
        Command::ParseCheck(args) => commands::parse_check(&args),
        Command::Prompt(args) => commands::prompt(&args),
    }
}
