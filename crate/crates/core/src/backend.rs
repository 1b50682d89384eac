//! Pluggable model and tool backends.
//!
//! A model backend answers chat-style message lists with text. Two
//! implementations: an HTTP client for chat-completions-compatible inference
//! servers, and a scripted backend replaying canned responses keyed by
//! `(sample_id, turn)` from a JSONL file, so protocol runs never require a
//! live model. Tool backends serve one box prediction per sample, either
//! from a recorded cache or from the seeded simulator.

use crate::config::{ModelBackend, ToolBackend, MODEL_TOKEN_ENV};
use crate::dataset::Sample;
use crate::toolsim::{self, ToolPrediction, ToolProfile};
use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("model backend unavailable: {0}")]
    Unavailable(String),
    #[error("scripted backend has no response for sample {sample_id:?} turn {turn}")]
    MissingScriptEntry { sample_id: String, turn: usize },
    #[error("script line {line}: {reason}")]
    ScriptParse { line: usize, reason: String },
    #[error("tool backend has no prediction for sample {0:?}")]
    ToolUnavailable(String),
    #[error(transparent)]
    ToolSim(#[from] toolsim::ToolSimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One part of a chat message; mirrors common chat-completions payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        Self::Text { text: text.into() }
    }

    pub fn image(url: impl Into<String>) -> Self {
        Self::ImageUrl {
            image_url: ImageUrl { url: url.into() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: vec![ContentPart::text(text)],
        }
    }

    pub fn user(parts: Vec<ContentPart>) -> Self {
        Self {
            role: "user".into(),
            content: parts,
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self {
            role: "assistant".into(),
            content: vec![ContentPart::text(text)],
        }
    }

    /// Concatenated text parts, used when persisting transcripts.
    pub fn text_content(&self) -> String {
        self.content
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::ImageUrl { .. } => None,
            })
            .collect()
    }
}

/// A model that completes a chat exchange with one text response.
///
/// `sample_id` and `turn` identify the request for scripted replay; live
/// backends ignore them.
#[async_trait]
pub trait ModelClient: Send + Sync {
    async fn complete(
        &self,
        sample_id: &str,
        turn: usize,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError>;
}

/// Chat-completions HTTP backend.
///
/// Sends `{"model": ..., "messages": [...]}` and reads
/// `choices[0].message.content`. A bearer token is attached when the
/// `MODEL_API_TOKEN` environment variable is set. Each call is retried once
/// before reporting the backend unavailable.
pub struct HttpModelClient {
    url: String,
    model: Option<String>,
    token: Option<String>,
    client: reqwest::Client,
}

impl HttpModelClient {
    pub fn new(url: impl Into<String>, model: Option<String>) -> Self {
        Self {
            url: url.into(),
            model,
            token: std::env::var(MODEL_TOKEN_ENV).ok(),
            client: reqwest::Client::new(),
        }
    }

    async fn request_once(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": messages,
        });
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let response = req
            .send()
            .await
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(BackendError::Unavailable(format!("status {status}")));
        }
        let value: serde_json::Value = response
            .json()
            .await
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Unavailable("malformed completion payload".into()))
    }
}

#[async_trait]
impl ModelClient for HttpModelClient {
    async fn complete(
        &self,
        _sample_id: &str,
        _turn: usize,
        messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        match self.request_once(messages).await {
            Ok(text) => Ok(text),
            Err(_) => self.request_once(messages).await,
        }
    }
}

#[derive(Deserialize)]
struct ScriptRecord {
    sample_id: String,
    turn: usize,
    response: String,
}

/// Scripted backend: a JSONL file of
/// `{"sample_id": str, "turn": int, "response": str}` records. Turn indices
/// start at 0.
pub struct ScriptedModelClient {
    responses: HashMap<(String, usize), String>,
}

impl ScriptedModelClient {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let file = std::fs::File::open(path)?;
        let reader = std::io::BufReader::new(file);
        let mut responses = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ScriptRecord =
                serde_json::from_str(&line).map_err(|e| BackendError::ScriptParse {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            responses.insert((record.sample_id, record.turn), record.response);
        }
        Ok(Self { responses })
    }

    pub fn from_responses(entries: impl IntoIterator<Item = (String, usize, String)>) -> Self {
        Self {
            responses: entries
                .into_iter()
                .map(|(id, turn, response)| ((id, turn), response))
                .collect(),
        }
    }
}

#[async_trait]
impl ModelClient for ScriptedModelClient {
    async fn complete(
        &self,
        sample_id: &str,
        turn: usize,
        _messages: &[ChatMessage],
    ) -> Result<String, BackendError> {
        self.responses
            .get(&(sample_id.to_string(), turn))
            .cloned()
            .ok_or_else(|| BackendError::MissingScriptEntry {
                sample_id: sample_id.to_string(),
                turn,
            })
    }
}

/// Build a model client from its config descriptor.
pub fn build_model_client(backend: &ModelBackend) -> Result<Box<dyn ModelClient>, BackendError> {
    match backend {
        ModelBackend::Http { url, model } => {
            Ok(Box::new(HttpModelClient::new(url.clone(), model.clone())))
        }
        ModelBackend::Scripted { path } => Ok(Box::new(ScriptedModelClient::from_path(path)?)),
    }
}

/// Tool backend: recorded cache or seeded simulator.
///
/// The simulator keys its randomness on `(seed, sample_id)` and realizes the
/// drawn error category against the sample's ground truth; the query phrase
/// does not influence the simulated box.
pub enum ToolClient {
    Cache(BTreeMap<String, ToolPrediction>),
    Sim(ToolProfile),
}

impl ToolClient {
    pub fn from_backend(backend: &ToolBackend) -> Result<Self, BackendError> {
        match backend {
            ToolBackend::Cache { path } => Ok(Self::Cache(toolsim::load_cache(path)?)),
            ToolBackend::Sim { preset, seed } => {
                let profile = ToolProfile::preset(preset)?.with_seed(*seed);
                Ok(Self::Sim(profile))
            }
        }
    }

    /// The tool's prediction for one sample.
    pub fn predict(&self, sample: &Sample, _phrase: &str) -> Result<ToolPrediction, BackendError> {
        match self {
            Self::Cache(map) => map
                .get(&sample.sample_id)
                .cloned()
                .ok_or_else(|| BackendError::ToolUnavailable(sample.sample_id.clone())),
            Self::Sim(profile) => Ok(toolsim::simulate(
                &sample.gt_bbox,
                f64::from(sample.width),
                f64::from(sample.height),
                profile,
                &sample.sample_id,
            )?),
        }
    }
}
