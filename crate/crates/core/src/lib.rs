//! Reward and evaluation engine for scene-graph generation with multimodal
//! language models.
//!
//! The pipeline: [`parser`] turns a raw model response into a validated
//! [`graph::SceneGraph`]; [`rewards`] scores it against ground truth (with
//! node alignment from [`matching`]); [`grpo`] turns a group of rewards into
//! advantages and the clipped objective; [`eval`] computes corpus metrics.

pub mod dataset;
pub mod embedding;
pub mod eval;
pub mod geometry;
pub mod graph;
pub mod grpo;
pub mod matching;
pub mod parser;
pub mod rewards;

pub use embedding::{EmbeddingTable, ExactMatch, LabelSimilarity};
pub use graph::{BBox, ImageDims, SceneGraph};
pub use parser::{parse_response, ParseMode, ParseOutcome, ParseStatus};
pub use rewards::{candidate_reward, RewardBreakdown, RewardConfig, RewardVariant};
