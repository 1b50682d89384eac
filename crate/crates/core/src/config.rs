//! Run configuration: protocol selection, prompts, backend descriptors, and
//! the knobs shared by the metric and reward modules.

use crate::metrics::MetricsConfig;
use crate::rewards::RewardConfig;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

/// Environment variable holding the bearer token for HTTP model backends.
/// This is the only setting read from the environment.
pub const MODEL_TOKEN_ENV: &str = "MODEL_API_TOKEN";

/// Default single-stage user prompt. `{Question}` is replaced with the
/// referring expression and `{tool results}` with the tool's box (or the
/// literal `null` when the tool produced none). Versioned and golden-tested;
/// changing it invalidates recorded transcripts.
pub const DEFAULT_PITER_TEMPLATE: &str = "You are given an image and a referring expression. \
Locate the single object the expression refers to.\n\
Referring expression: {Question}\n\
A grounding tool was run for this expression and returned the box: {tool results}\n\
The tool result is only a reference and may be wrong. Verify it against the image; keep it, \
refine it, or replace it as needed.\n\
Output the final bounding box in JSON with absolute pixel coordinates, exactly in the form \
{\"bbox_2d\": [x1, y1, x2, y2]}, and nothing else.";

/// Default system prompt for the two-stage protocol.
pub const DEFAULT_TRRGR_SYSTEM_PROMPT: &str = "You are a visual grounding assistant. \
In the first turn, reason inside <think></think> about where the referred object is, then \
optionally query the grounding tool with \
<tool_call>{\"name\": \"ground\", \"arguments\": {\"phrase\": \"...\"}}</tool_call>.\n\
In the second turn you will receive the tool's box. Re-examine it inside \
<rethink></rethink>, then output the final box as \
<answer>{\"bbox_2d\": [x1, y1, x2, y2]}</answer>.";

/// Default system prompt for the single-stage protocol.
pub const DEFAULT_PITER_SYSTEM_PROMPT: &str =
    "You are a visual grounding assistant. Answer with a single JSON object.";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("piter_template must contain {{Question}} and {{tool results}} exactly once each")]
    BadTemplate,
    #[error("parallelism must be at least 1")]
    BadParallelism,
    #[error("invalid backend descriptor {0:?}: expected {1}")]
    BadBackend(String, &'static str),
    #[error(transparent)]
    Rewards(#[from] crate::rewards::RewardError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

/// Which conversation protocol drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    /// Single stage: tool result injected into the user prompt.
    Piter,
    /// Two stages: think + tool call, then rethink + answer.
    Trrgr,
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "piter" => Ok(Self::Piter),
            "trrgr" => Ok(Self::Trrgr),
            other => Err(format!("unknown protocol {other:?} (expected piter|trrgr)")),
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Piter => write!(f, "piter"),
            Self::Trrgr => write!(f, "trrgr"),
        }
    }
}

/// Model backend descriptor. `http:URL` targets a chat-style endpoint;
/// `scripted:PATH` replays canned responses keyed by `(sample_id, turn)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelBackend {
    Http {
        url: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
    },
    Scripted {
        path: PathBuf,
    },
}

impl std::str::FromStr for ModelBackend {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("http", _)) | Some(("https", _)) => Ok(Self::Http {
                url: s.to_string(),
                model: None,
            }),
            Some(("scripted", path)) => Ok(Self::Scripted { path: path.into() }),
            _ => Err(ConfigError::BadBackend(
                s.to_string(),
                "http:URL or scripted:PATH",
            )),
        }
    }
}

/// Tool backend descriptor: `cache:PATH` for recorded predictions,
/// `sim:PRESET` for the synthetic tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ToolBackend {
    Cache {
        path: PathBuf,
    },
    Sim {
        preset: String,
        #[serde(default)]
        seed: u64,
    },
}

impl std::str::FromStr for ToolBackend {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some(("cache", path)) => Ok(Self::Cache { path: path.into() }),
            Some(("sim", preset)) => Ok(Self::Sim {
                preset: preset.to_string(),
                seed: 0,
            }),
            _ => Err(ConfigError::BadBackend(
                s.to_string(),
                "cache:PATH or sim:PRESET",
            )),
        }
    }
}

fn default_parallelism() -> usize {
    8
}

fn default_piter_template() -> String {
    DEFAULT_PITER_TEMPLATE.to_string()
}

/// Full configuration for an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: ProtocolKind,
    /// System prompt; defaults to the protocol's shipped prompt when empty.
    #[serde(default)]
    pub system_prompt: Option<String>,
    #[serde(default = "default_piter_template")]
    pub piter_template: String,
    pub model_backend: ModelBackend,
    pub tool_backend: ToolBackend,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub rewards: RewardConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if count_occurrences(&self.piter_template, "{Question}") != 1
            || count_occurrences(&self.piter_template, "{tool results}") != 1
        {
            return Err(ConfigError::BadTemplate);
        }
        if self.parallelism == 0 {
            return Err(ConfigError::BadParallelism);
        }
        self.rewards.validate()?;
        self.metrics.validate()?;
        Ok(())
    }

    pub fn system_prompt(&self) -> &str {
        match &self.system_prompt {
            Some(p) => p,
            None => match self.protocol {
                ProtocolKind::Piter => DEFAULT_PITER_SYSTEM_PROMPT,
                ProtocolKind::Trrgr => DEFAULT_TRRGR_SYSTEM_PROMPT,
            },
        }
    }
}

fn count_occurrences(text: &str, needle: &str) -> usize {
    text.match_indices(needle).count()
}
