//! Request handlers.

use crate::state::AppState;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use trrgr_core::api::*;
use trrgr_core::backend::{build_model_client, ToolClient};
use trrgr_core::config::{RunConfig, DEFAULT_PITER_TEMPLATE};
use trrgr_core::dataset::load_dataset;
use trrgr_core::metrics::build_report;
use trrgr_core::protocol::{self, render_piter_prompt};
use trrgr_core::rollout::compute_rollout_rewards;
use trrgr_core::toolsim;
use trrgr_core::MetricsConfig;

/// Error responses: bad inputs are 400, missing runs 404, the rest 500.
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl ToString) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            message: message.to_string(),
        }
    }

    fn not_found(message: impl ToString) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            message: message.to_string(),
        }
    }

    fn internal(message: impl ToString) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: message.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(ApiErrorBody {
            error: self.message,
        });
        (self.status, body).into_response()
    }
}

pub async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

pub async fn eval(
    State(state): State<AppState>,
    Json(req): Json<EvalRequest>,
) -> Result<Json<EvalResponse>, ApiError> {
    let run_id = uuid::Uuid::new_v4().to_string();
    let config = RunConfig {
        protocol: req.protocol,
        system_prompt: req.system_prompt.clone(),
        piter_template: req
            .piter_template
            .clone()
            .unwrap_or_else(|| DEFAULT_PITER_TEMPLATE.to_string()),
        model_backend: req.model.clone(),
        tool_backend: req.tool.clone(),
        metrics: req.metrics.unwrap_or_default(),
        rewards: req.rewards.clone().unwrap_or_default(),
        parallelism: req.parallelism.unwrap_or(8),
        output_dir: req.output_dir.clone(),
    };
    config.validate().map_err(ApiError::bad_request)?;

    let samples = load_dataset(&req.dataset).map_err(ApiError::bad_request)?;
    let model = build_model_client(&config.model_backend).map_err(ApiError::bad_request)?;
    let tool = ToolClient::from_backend(&config.tool_backend).map_err(ApiError::bad_request)?;

    state
        .register(RunSummary {
            run_id: run_id.clone(),
            protocol: req.protocol,
            dataset: req.dataset.clone(),
            status: RunStatus::Running,
            report: None,
            error: None,
        })
        .await;

    tracing::info!(run_id, protocol = %req.protocol, n = samples.len(), "eval run started");
    match protocol::evaluate(&samples, &config, model.as_ref(), &tool).await {
        Ok(run) => {
            let report = run.report.to_json_value();
            state
                .update(&run_id, |s| {
                    s.status = RunStatus::Completed;
                    s.report = Some(report.clone());
                })
                .await;
            Ok(Json(EvalResponse {
                run_id,
                n: run.results.len(),
                report,
                paths: run.paths,
            }))
        }
        Err(e) => {
            state
                .update(&run_id, |s| {
                    s.status = RunStatus::Failed;
                    s.error = Some(e.to_string());
                })
                .await;
            Err(ApiError::internal(e))
        }
    }
}

pub async fn list_runs(State(state): State<AppState>) -> Json<Vec<RunSummary>> {
    Json(state.list().await)
}

pub async fn get_run(
    State(state): State<AppState>,
    Path(run_id): Path<String>,
) -> Result<Json<RunSummary>, ApiError> {
    state
        .get(&run_id)
        .await
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown run {run_id:?}")))
}

pub async fn metrics(Json(req): Json<MetricsRequest>) -> Result<Json<MetricsResponse>, ApiError> {
    let config = req.config.unwrap_or_default();
    let outcomes = match (&req.results, &req.outcomes) {
        (Some(path), None) => {
            let results = protocol::load_results(path).map_err(ApiError::bad_request)?;
            protocol::results_to_outcomes(&results)
        }
        (None, Some(outcomes)) => outcomes.clone(),
        _ => {
            return Err(ApiError::bad_request(
                "provide exactly one of `results` or `outcomes`",
            ))
        }
    };
    let report = build_report(&outcomes, &config).map_err(ApiError::bad_request)?;
    Ok(Json(MetricsResponse {
        report: report.to_json_value(),
        csv: report.to_csv_line(),
    }))
}

pub async fn simulate_tool(
    Json(req): Json<SimulateRequest>,
) -> Result<Json<SimulateResponse>, ApiError> {
    let samples = load_dataset(&req.dataset).map_err(ApiError::bad_request)?;
    let profile = toolsim::ToolProfile::preset(&req.preset)
        .map_err(ApiError::bad_request)?
        .with_seed(req.seed);
    profile
        .validate(MetricsConfig::default().tau)
        .map_err(ApiError::bad_request)?;

    let mut predictions = std::collections::BTreeMap::new();
    let mut category_counts = std::collections::BTreeMap::new();
    for sample in &samples {
        let pred = toolsim::simulate(
            &sample.gt_bbox,
            f64::from(sample.width),
            f64::from(sample.height),
            &profile,
            &sample.sample_id,
        )
        .map_err(ApiError::internal)?;
        if let Some(category) = pred.category {
            let key = serde_json::to_value(category)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_else(|| format!("{category:?}"));
            *category_counts.entry(key).or_insert(0usize) += 1;
        }
        predictions.insert(sample.sample_id.clone(), pred);
    }
    toolsim::write_cache(&req.out, &format!("sim:{}", req.preset), &predictions)
        .map_err(ApiError::internal)?;

    Ok(Json(SimulateResponse {
        n: predictions.len(),
        category_counts,
        out: req.out,
    }))
}

pub async fn rewards(Json(req): Json<RewardsRequest>) -> Result<Json<RewardsResponse>, ApiError> {
    let samples = load_dataset(&req.dataset).map_err(ApiError::bad_request)?;
    let rewards_config = req.rewards.unwrap_or_default();
    rewards_config.validate().map_err(ApiError::bad_request)?;
    let groups = compute_rollout_rewards(&req.trajectories, &samples, &rewards_config, &req.out)
        .map_err(ApiError::bad_request)?;
    Ok(Json(RewardsResponse {
        groups: groups.len(),
        trajectories: groups.iter().map(|g| g.trajectories.len()).sum(),
        out: req.out,
    }))
}

pub async fn render_prompt(
    Json(req): Json<RenderPromptRequest>,
) -> Result<Json<RenderPromptResponse>, ApiError> {
    let samples = load_dataset(&req.dataset).map_err(ApiError::bad_request)?;
    let cache = toolsim::load_cache(&req.tool).map_err(ApiError::bad_request)?;
    let template = req
        .template
        .unwrap_or_else(|| DEFAULT_PITER_TEMPLATE.to_string());

    let mut prompts = Vec::new();
    for sample in &samples {
        if let Some(only) = &req.sample_id {
            if only != &sample.sample_id {
                continue;
            }
        }
        let bbox = cache.get(&sample.sample_id).and_then(|p| p.bbox);
        prompts.push(RenderedPrompt {
            sample_id: sample.sample_id.clone(),
            prompt: render_piter_prompt(&template, &sample.expression, bbox.as_ref()),
        });
    }
    if prompts.is_empty() {
        return Err(ApiError::not_found(match req.sample_id {
            Some(id) => format!("sample {id:?} not in dataset"),
            None => "dataset is empty".to_string(),
        }));
    }
    Ok(Json(RenderPromptResponse { prompts }))
}
