//! Thin typed client for the trrgr evaluation service.

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use trrgr_core::api::*;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("service error ({status}): {message}")]
    Service { status: u16, message: String },
}

/// Client bound to one service base URL.
#[derive(Clone)]
pub struct Client {
    base_url: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>) -> Self {
        let mut base_url = base_url.into();
        while base_url.ends_with('/') {
            base_url.pop();
        }
        Self {
            base_url,
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    async fn decode<T: DeserializeOwned>(response: reqwest::Response) -> Result<T, ClientError> {
        let status = response.status();
        if status.is_success() {
            Ok(response.json().await?)
        } else {
            let message = match response.json::<ApiErrorBody>().await {
                Ok(body) => body.error,
                Err(_) => status.to_string(),
            };
            Err(ClientError::Service {
                status: status.as_u16(),
                message,
            })
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        let response = self
            .http
            .post(format!("{}{path}", self.base_url))
            .json(body)
            .send()
            .await?;
        Self::decode(response).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let response = self
            .http
            .get(format!("{}{path}", self.base_url))
            .send()
            .await?;
        Self::decode(response).await
    }

    pub async fn health(&self) -> Result<serde_json::Value, ClientError> {
        self.get("/health").await
    }

    pub async fn eval(&self, request: &EvalRequest) -> Result<EvalResponse, ClientError> {
        self.post("/v1/eval", request).await
    }

    pub async fn list_runs(&self) -> Result<Vec<RunSummary>, ClientError> {
        self.get("/v1/runs").await
    }

    pub async fn get_run(&self, run_id: &str) -> Result<RunSummary, ClientError> {
        self.get(&format!("/v1/runs/{run_id}")).await
    }

    pub async fn metrics(&self, request: &MetricsRequest) -> Result<MetricsResponse, ClientError> {
        self.post("/v1/metrics", request).await
    }

    pub async fn simulate_tool(
        &self,
        request: &SimulateRequest,
    ) -> Result<SimulateResponse, ClientError> {
        self.post("/v1/simulate-tool", request).await
    }

    pub async fn rewards(&self, request: &RewardsRequest) -> Result<RewardsResponse, ClientError> {
        self.post("/v1/rewards", request).await
    }

    pub async fn render_prompt(
        &self,
        request: &RenderPromptRequest,
    ) -> Result<RenderPromptResponse, ClientError> {
        self.post("/v1/render-prompt", request).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_url_is_normalized() {
        assert_eq!(Client::new("http://x:1/").base_url(), "http://x:1");
        assert_eq!(Client::new("http://x:1").base_url(), "http://x:1");
    }
}
