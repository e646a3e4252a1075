//! Group-relative advantages and the clipped surrogate objective.
//!
//! Everything here works on plain scalars supplied by the caller: rewards per
//! candidate and per-token probability ratios. No gradients are computed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("group has {0} candidates, at least 2 are required")]
    GroupTooSmall(usize),
    #[error("ratio {0} is not strictly positive and finite")]
    NonpositiveRatio(f64),
    #[error("reward {0} is not finite")]
    NonFiniteReward(f64),
    #[error("token ratios are required to evaluate the objective")]
    MissingRatios,
    #[error("reference ratios are required when beta > 0")]
    MissingReferenceRatios,
    #[error("{what}: expected {expected} sequences, found {found}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("candidate {0} has an empty token sequence")]
    EmptySequence(usize),
    #[error("invalid GRPO configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    /// Clip radius for the probability ratio.
    pub epsilon: f64,
    /// KL penalty weight.
    pub beta: f64,
    /// Added to the group standard deviation before dividing.
    pub std_floor: f64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self { epsilon: 0.2, beta: 0.04, std_floor: 1e-6 }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(GrpoError::InvalidConfig(format!("epsilon must be in (0, 1), got {}", self.epsilon)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(GrpoError::InvalidConfig(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.std_floor > 0.0 && self.std_floor.is_finite()) {
            return Err(GrpoError::InvalidConfig(format!("std_floor must be > 0, got {}", self.std_floor)));
        }
        Ok(())
    }
}

/// `(r_i − mean) / (population std + std_floor)`. A group whose rewards are
/// all equal yields exact zeros.
pub fn advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::GroupTooSmall(rewards.len()));
    }
    if let Some(&bad) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(GrpoError::NonFiniteReward(bad));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + std_floor;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// `min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)`.
pub fn clipped_term(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Per-token KL estimate `r − ln r − 1` for `r = π_ref / π_θ`; always ≥ 0.
pub fn kl_estimate(ref_ratio: f64) -> Result<f64, GrpoError> {
    if !(ref_ratio > 0.0 && ref_ratio.is_finite()) {
        return Err(GrpoError::NonpositiveRatio(ref_ratio));
    }
    Ok((ref_ratio - ref_ratio.ln() - 1.0).max(0.0))
}

/// One group of candidates for a single prompt.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupSample {
    pub rewards: Vec<f64>,
    /// Per candidate, per token `π_θ / π_old`.
    #[serde(default)]
    pub ratios: Option<Vec<Vec<f64>>>,
    /// Per candidate, per token `π_ref / π_θ`.
    #[serde(default)]
    pub ref_ratios: Option<Vec<Vec<f64>>>,
}

fn check_sequences(what: &'static str, seqs: &[Vec<f64>], group: usize) -> Result<(), GrpoError> {
    if seqs.len() != group {
        return Err(GrpoError::LengthMismatch { what, expected: group, found: seqs.len() });
    }
    for (i, seq) in seqs.iter().enumerate() {
        if seq.is_empty() {
            return Err(GrpoError::EmptySequence(i));
        }
        if let Some(&bad) = seq.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(GrpoError::NonpositiveRatio(bad));
        }
    }
    Ok(())
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// Surrogate objective for one group: the mean over candidates of
/// (token-mean clipped term − β · token-mean KL estimate).
pub fn grpo_objective(sample: &GroupSample, config: &GrpoConfig) -> Result<f64, GrpoError> {
    config.validate()?;
    let adv = advantages(&sample.rewards, config.std_floor)?;
    let group = adv.len();
    let ratios = sample.ratios.as_ref().ok_or(GrpoError::MissingRatios)?;
    check_sequences("ratios", ratios, group)?;
    let policy: Vec<f64> = ratios
        .iter()
        .zip(&adv)
        .map(|(seq, &a)| mean(seq.iter().map(|&r| clipped_term(r, a, config.epsilon))))
        .collect();

    let penalty = if config.beta > 0.0 {
        let refs = sample.ref_ratios.as_ref().ok_or(GrpoError::MissingReferenceRatios)?;
        check_sequences("ref_ratios", refs, group)?;
        if let Some((r, p)) = refs.iter().zip(ratios).find(|(r, p)| r.len() != p.len()) {
            return Err(GrpoError::LengthMismatch { what: "ref_ratios tokens", expected: p.len(), found: r.len() });
        }
        refs.iter()
            .map(|seq| seq.iter().map(|&r| kl_estimate(r)).collect::<Result<Vec<_>, _>>().map(|k| mean(k.into_iter())))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        vec![0.0; group]
    };

    Ok(mean(policy.iter().zip(&penalty).map(|(p, k)| p - config.beta * k)))
}
