//! Request/response types for the HTTP service, shared by server and client.
//!
//! File paths in requests are resolved on the machine running the service;
//! the CLI embeds a local service by default, so paths behave as local paths
//! unless a remote `--server` is used.

use crate::config::{ModelBackend, ProtocolKind, ToolBackend};
use crate::metrics::{MetricsConfig, SampleOutcome};
use crate::protocol::EvalPaths;
use crate::rewards::RewardConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Start an evaluation run. Optional fields fall back to shipped defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub protocol: ProtocolKind,
    pub dataset: PathBuf,
    pub tool: ToolBackend,
    pub model: ModelBackend,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub piter_template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<RewardConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub run_id: String,
    pub n: usize,
    pub report: serde_json::Value,
    pub paths: EvalPaths,
}

/// Status of a registered run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub protocol: ProtocolKind,
    pub dataset: PathBuf,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Compute a report from persisted results or inline outcomes (exactly one
/// of the two must be given).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<Vec<SampleOutcome>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<MetricsConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsResponse {
    pub report: serde_json::Value,
    pub csv: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateRequest {
    pub dataset: PathBuf,
    pub preset: String,
    #[serde(default)]
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub n: usize,
    pub category_counts: std::collections::BTreeMap<String, usize>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardsRequest {
    pub trajectories: PathBuf,
    pub dataset: PathBuf,
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewards: Option<RewardConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardsResponse {
    pub groups: usize,
    pub trajectories: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderPromptRequest {
    pub dataset: PathBuf,
    /// Tool cache JSONL supplying the boxes to inject.
    pub tool: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub sample_id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderPromptResponse {
    pub prompts: Vec<RenderedPrompt>,
}

/// Error payload returned by every endpoint on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiErrorBody {
    pub error: String,
}
