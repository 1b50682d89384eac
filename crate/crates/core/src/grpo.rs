//! Rollout groups and group-relative advantage computation.
//!
//! Advantages normalize each trajectory's scalar reward against its own
//! rollout group: `a_i = (r_i - mean(r)) / (popstd(r) + delta)`. Groups where
//! every reward is equal short-circuit to exact zeros so the stabilizer never
//! injects noise into degenerate groups. Policy-gradient machinery (KL terms,
//! clipping, optimizer state) is out of scope; groups serialize to JSONL for
//! downstream trainers.

use crate::geometry::BBox;
use crate::rewards::RewardBreakdown;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default additive stabilizer for the advantage denominator.
pub const DEFAULT_STABILIZER: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum GrpoError {
    #[error("a rollout group needs at least 2 trajectories, got {0}")]
    EmptyGroup(usize),
    #[error("trajectory for sample {found} mixed into group for sample {expected}")]
    MixedSamples { expected: String, found: String },
}

/// One rollout: the trajectory components plus its scored reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub sample_id: String,
    pub think_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_feedback: Option<BBox>,
    pub rethink_text: String,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
}

impl Trajectory {
    /// Build a trajectory whose scalar reward is the breakdown total.
    pub fn new(
        sample_id: impl Into<String>,
        think_text: impl Into<String>,
        action: Option<String>,
        tool_feedback: Option<BBox>,
        rethink_text: impl Into<String>,
        breakdown: RewardBreakdown,
    ) -> Self {
        Self {
            sample_id: sample_id.into(),
            think_text: think_text.into(),
            action,
            tool_feedback,
            rethink_text: rethink_text.into(),
            reward: breakdown.total,
            breakdown,
        }
    }
}

/// A group of rollouts for one sample, with advantages once computed.
///
/// Serializes as one JSONL record per group with trajectories inlined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub sample_id: String,
    pub trajectories: Vec<Trajectory>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advantages: Option<Vec<f64>>,
}

/// Group-relative advantages over raw scalar rewards.
///
/// Uses the population standard deviation. All-equal groups return exact
/// zeros rather than delta-scaled noise. Mean and variance are accumulated
/// over a sorted copy so permuting the rewards permutes the advantages
/// bit-identically.
pub fn group_advantages(rewards: &[f64], stabilizer: f64) -> Result<Vec<f64>, GrpoError> {
    if rewards.len() < 2 {
        return Err(GrpoError::EmptyGroup(rewards.len()));
    }
    let first = rewards[0];
    if rewards.iter().all(|&r| r == first) {
        return Ok(vec![0.0; rewards.len()]);
    }
    let mut sorted = rewards.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + stabilizer;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Assemble a rollout group and populate its advantages.
pub fn assemble_group(
    sample_id: &str,
    trajectories: Vec<Trajectory>,
) -> Result<RolloutGroup, GrpoError> {
    if let Some(t) = trajectories.iter().find(|t| t.sample_id != sample_id) {
        return Err(GrpoError::MixedSamples {
            expected: sample_id.to_string(),
            found: t.sample_id.clone(),
        });
    }
    let rewards: Vec<f64> = trajectories.iter().map(|t| t.reward).collect();
    let advantages = group_advantages(&rewards, DEFAULT_STABILIZER)?;
    Ok(RolloutGroup {
        sample_id: sample_id.to_string(),
        trajectories,
        advantages: Some(advantages),
    })
}
