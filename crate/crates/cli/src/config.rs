//! Run configuration: defaults, then an optional TOML file, then flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sgg_core::eval::EvalConfig;
use sgg_core::geometry::L1Scale;
use sgg_core::grpo::GrpoConfig;
use sgg_core::matching::CostWeights;
use sgg_core::{ParseMode, RewardConfig, RewardVariant};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub embeddings: Option<PathBuf>,
    pub workers: Option<usize>,
    pub reward: RewardSection,
    pub eval: EvalSection,
    pub grpo: GrpoSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub variant: Option<RewardVariant>,
    pub iou_threshold: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub include_format: Option<bool>,
    pub format_mode: Option<ParseMode>,
    pub l1_scale: Option<L1Scale>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub iou_threshold: Option<f64>,
    pub top_k: Option<usize>,
    pub parse_mode: Option<ParseMode>,
    pub predicate_vocabulary: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoSection {
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub std_floor: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::io(path, source))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }
}

/// Flag values for the reward command; `None` defers to the file.
#[derive(Debug, Default, Clone)]
pub struct RewardOverrides {
    pub variant: Option<RewardVariant>,
    pub iou_threshold: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda3: Option<f64>,
    pub format_mode: Option<ParseMode>,
    pub l1_scale: Option<L1Scale>,
    pub no_format: bool,
}

pub fn reward_config(file: &RewardSection, flags: &RewardOverrides) -> Result<RewardConfig, CliError> {
    let base = RewardConfig::default();
    let default_w = CostWeights::default();
    let weights = CostWeights::new(
        flags.lambda1.or(file.lambda1).unwrap_or(default_w.lambda1()),
        flags.lambda2.or(file.lambda2).unwrap_or(default_w.lambda2()),
        flags.lambda3.or(file.lambda3).unwrap_or(default_w.lambda3()),
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let config = RewardConfig {
        variant: flags.variant.or(file.variant).unwrap_or(base.variant),
        iou_threshold: flags.iou_threshold.or(file.iou_threshold).unwrap_or(base.iou_threshold),
        weights,
        include_format: !flags.no_format && file.include_format.unwrap_or(base.include_format),
        format_mode: flags.format_mode.or(file.format_mode).unwrap_or(base.format_mode),
        l1_scale: flags.l1_scale.or(file.l1_scale).unwrap_or(base.l1_scale),
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

#[derive(Debug, Default, Clone)]
pub struct EvalOverrides {
    pub iou_threshold: Option<f64>,
    pub top_k: Option<usize>,
    pub parse_mode: Option<ParseMode>,
    pub predicate_vocabulary: Option<Vec<String>>,
}

pub fn eval_config(file: &EvalSection, flags: EvalOverrides) -> Result<EvalConfig, CliError> {
    let base = EvalConfig::default();
    let config = EvalConfig {
        iou_threshold: flags.iou_threshold.or(file.iou_threshold).unwrap_or(base.iou_threshold),
        top_k: flags.top_k.or(file.top_k),
        parse_mode: flags.parse_mode.or(file.parse_mode).unwrap_or(base.parse_mode),
        predicate_vocabulary: flags.predicate_vocabulary.or_else(|| file.predicate_vocabulary.clone()),
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GrpoOverrides {
    pub epsilon: Option<f64>,
    pub beta: Option<f64>,
    pub std_floor: Option<f64>,
}

pub fn grpo_config(file: &GrpoSection, flags: GrpoOverrides) -> Result<GrpoConfig, CliError> {
    let base = GrpoConfig::default();
    let config = GrpoConfig {
        epsilon: flags.epsilon.or(file.epsilon).unwrap_or(base.epsilon),
        beta: flags.beta.or(file.beta).unwrap_or(base.beta),
        std_floor: flags.std_floor.or(file.std_floor).unwrap_or(base.std_floor),
    };
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(config)
}

pub fn workers(flag: Option<usize>, file: Option<usize>) -> Result<usize, CliError> {
    match flag.or(file) {
        Some(0) => Err(CliError::Config("workers must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
