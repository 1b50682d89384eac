//! Conversation drivers for the two evaluation protocols, plus run
//! persistence.
//!
//! The single-stage protocol injects the tool's box into the user prompt and
//! parses one JSON answer. The two-stage protocol lets the model think and
//! query the tool first, injects the tool's box as a user message, then
//! validates the tagged rethink/answer output and computes rewards. Failed
//! parses and failed backends score `iou_f = 0` and are recorded, never
//! skipped, so accuracy stays defined over all samples.
//!
//! Runs execute samples under bounded concurrency and fold results back into
//! dataset order, so result files and reports are byte-identical across
//! parallelism settings whenever the backends are deterministic.

use crate::backend::{BackendError, ChatMessage, ContentPart, ModelClient, ToolClient};
use crate::config::{ConfigError, ProtocolKind, RunConfig};
use crate::dataset::Sample;
use crate::geometry::{fmt_coord, BBox};
use crate::metrics::{self, MetricsReport, SampleOutcome};
use crate::rewards::{breakdown_from_parts, RewardBreakdown};
use crate::toolsim::ToolPrediction;
use crate::trace::{self, FormatDefect};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Non-fatal conditions recorded on a sample result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunFlag {
    /// Turn 1 had no parsable tool call; the tool was queried with the
    /// original expression instead.
    ToolQueryFallback,
    /// The tool backend had no prediction; scored as `iou_t = 0`.
    ToolUnavailable,
}

/// Outcome of one sample under either protocol.
///
/// `pred_bbox` absent implies `iou_f == 0` and `parse_error` present. Boxes
/// are recorded as produced; scoring clamps them to the image first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    pub sample_id: String,
    pub iou_t: f64,
    pub iou_f: f64,
    pub tool_bbox: Option<BBox>,
    pub pred_bbox: Option<BBox>,
    pub format_valid: bool,
    pub rewards: RewardBreakdown,
    pub raw_turns: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<RunFlag>,
}

/// Render the single-stage user prompt from its template.
///
/// `{Question}` takes the referring expression; `{tool results}` takes the
/// tool box as `[x1, y1, x2, y2]` (integral coordinates rendered without a
/// decimal point) or the literal `null` when the tool produced no box.
pub fn render_piter_prompt(template: &str, expression: &str, tool_bbox: Option<&BBox>) -> String {
    let rendered_box = match tool_bbox {
        Some(b) => {
            let c = b.as_array();
            format!(
                "[{}, {}, {}, {}]",
                fmt_coord(c[0]),
                fmt_coord(c[1]),
                fmt_coord(c[2]),
                fmt_coord(c[3])
            )
        }
        None => "null".to_string(),
    };
    template
        .replacen("{Question}", expression, 1)
        .replacen("{tool results}", &rendered_box, 1)
}

/// IoU against ground truth after clamping the prediction into the image;
/// 0 for an absent box.
fn score_iou(bbox: Option<&BBox>, sample: &Sample) -> f64 {
    let (w, h) = (f64::from(sample.width), f64::from(sample.height));
    match bbox {
        Some(b) => match b.clamp_to_image(w, h) {
            Ok(clamped) => sample.gt_bbox.iou(&clamped),
            Err(_) => 0.0,
        },
        None => 0.0,
    }
}

fn backend_failure_result(
    sample: &Sample,
    tool: Option<&ToolPrediction>,
    raw_turns: Vec<String>,
    config: &RunConfig,
) -> SampleResult {
    let tool_bbox = tool.and_then(|t| t.bbox);
    let iou_t = score_iou(tool_bbox.as_ref(), sample);
    SampleResult {
        sample_id: sample.sample_id.clone(),
        iou_t,
        iou_f: 0.0,
        tool_bbox,
        pred_bbox: None,
        format_valid: false,
        rewards: breakdown_from_parts(0.0, iou_t, 0.0, &config.rewards),
        raw_turns,
        parse_error: Some("BackendUnavailable".into()),
        flags: Vec::new(),
    }
}

/// Run one sample under the single-stage protocol.
pub async fn run_piter(
    sample: &Sample,
    tool_pred: &ToolPrediction,
    model: &dyn ModelClient,
    config: &RunConfig,
) -> SampleResult {
    let prompt = render_piter_prompt(
        &config.piter_template,
        &sample.expression,
        tool_pred.bbox.as_ref(),
    );
    let messages = vec![
        ChatMessage::system(config.system_prompt()),
        ChatMessage::user(vec![
            ContentPart::image(sample.image.clone()),
            ContentPart::text(prompt),
        ]),
    ];

    let response = match model.complete(&sample.sample_id, 0, &messages).await {
        Ok(text) => text,
        Err(_) => return backend_failure_result(sample, Some(tool_pred), Vec::new(), config),
    };

    let iou_t = score_iou(tool_pred.bbox.as_ref(), sample);
    let (pred_bbox, parse_error) = match trace::parse_piter_output(&response) {
        Ok(b) => (Some(b), None),
        Err(_) => (None, Some("NoParsableBox".to_string())),
    };
    let iou_f = score_iou(pred_bbox.as_ref(), sample);
    // Single-stage format discipline is just "a parsable JSON box".
    let format = if pred_bbox.is_some() { 1.0 } else { 0.0 };

    SampleResult {
        sample_id: sample.sample_id.clone(),
        iou_t,
        iou_f,
        tool_bbox: tool_pred.bbox,
        pred_bbox,
        format_valid: pred_bbox.is_some(),
        rewards: breakdown_from_parts(format, iou_t, iou_f, &config.rewards),
        raw_turns: vec![response],
        parse_error,
        flags: Vec::new(),
    }
}

/// Render the user message that injects the tool's box in turn 2.
pub fn render_tool_feedback(tool_bbox: Option<&BBox>) -> String {
    match tool_bbox {
        Some(b) => {
            let payload = serde_json::json!({ "bbox_2d": b.as_array() });
            format!("The grounding tool returned: {payload}")
        }
        None => "The grounding tool returned: null".to_string(),
    }
}

/// Defects that prevent an answer box from being recovered, in reporting
/// priority order.
fn box_blocking_defect(defects: &[FormatDefect]) -> Option<FormatDefect> {
    const BLOCKING: [FormatDefect; 4] = [
        FormatDefect::MissingAnswer,
        FormatDefect::MalformedAnswerJson,
        FormatDefect::InvalidBoxGeometry,
        FormatDefect::DuplicateTag,
    ];
    BLOCKING.into_iter().find(|d| defects.contains(d))
}

/// Run one sample under the two-stage protocol.
pub async fn run_trrgr(
    sample: &Sample,
    tool: &ToolClient,
    model: &dyn ModelClient,
    config: &RunConfig,
) -> SampleResult {
    let mut messages = vec![
        ChatMessage::system(config.system_prompt()),
        ChatMessage::user(vec![
            ContentPart::image(sample.image.clone()),
            ContentPart::text(sample.expression.clone()),
        ]),
    ];

    let turn1 = match model.complete(&sample.sample_id, 0, &messages).await {
        Ok(text) => text,
        Err(_) => return backend_failure_result(sample, None, Vec::new(), config),
    };

    let mut flags = Vec::new();
    let phrase = match trace::parse_tool_action(&turn1) {
        Ok(Some(phrase)) => phrase,
        // No parsable action: fall back to the original expression, flagged.
        _ => {
            flags.push(RunFlag::ToolQueryFallback);
            sample.expression.clone()
        }
    };

    let tool_pred = match tool.predict(sample, &phrase) {
        Ok(pred) => Some(pred),
        Err(_) => {
            flags.push(RunFlag::ToolUnavailable);
            None
        }
    };
    let tool_bbox = tool_pred.as_ref().and_then(|p| p.bbox);
    let iou_t = score_iou(tool_bbox.as_ref(), sample);

    messages.push(ChatMessage::assistant(turn1.clone()));
    messages.push(ChatMessage::user(vec![ContentPart::text(
        render_tool_feedback(tool_bbox.as_ref()),
    )]));

    let turn2 = match model.complete(&sample.sample_id, 1, &messages).await {
        Ok(text) => text,
        Err(_) => {
            let mut r =
                backend_failure_result(sample, tool_pred.as_ref(), vec![turn1.clone()], config);
            r.flags = flags;
            return r;
        }
    };

    let parsed = trace::validate_trajectory(&turn1, &turn2);
    let iou_f = score_iou(parsed.answer_box.as_ref(), sample);
    let parse_error = if parsed.answer_box.is_none() {
        Some(
            box_blocking_defect(&parsed.verdict.defects)
                .map(|d| d.to_string())
                .unwrap_or_else(|| "MissingAnswer".to_string()),
        )
    } else {
        None
    };

    SampleResult {
        sample_id: sample.sample_id.clone(),
        iou_t,
        iou_f,
        tool_bbox,
        pred_bbox: parsed.answer_box,
        format_valid: parsed.format_valid(),
        rewards: RewardBreakdown::compute(&parsed.verdict, iou_t, iou_f, &config.rewards),
        raw_turns: vec![turn1, turn2],
        parse_error,
        flags,
    }
}

/// Files written by [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPaths {
    pub results: PathBuf,
    pub report_json: PathBuf,
    pub report_csv: PathBuf,
}

/// A completed run: per-sample results in dataset order plus the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub results: Vec<SampleResult>,
    pub report: MetricsReport,
    pub paths: EvalPaths,
}

/// Run the configured protocol over all samples with bounded concurrency,
/// persist per-sample results and the report, and return both.
///
/// Results are folded back into dataset order before persistence, so output
/// is independent of completion order. Per-sample backend errors are
/// recorded on the affected samples; only setup errors are fatal.
pub async fn evaluate(
    samples: &[Sample],
    config: &RunConfig,
    model: &dyn ModelClient,
    tool: &ToolClient,
) -> Result<EvalRun, EvalError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(EvalError::EmptyDataset);
    }

    let mut tasks = Vec::with_capacity(samples.len());
    for (idx, sample) in samples.iter().enumerate() {
        tasks.push(run_indexed(idx, sample, config, model, tool));
    }
    let mut results: Vec<(usize, SampleResult)> = stream::iter(tasks)
        .buffer_unordered(config.parallelism)
        .collect()
        .await;
    results.sort_by_key(|(idx, _)| *idx);
    let results: Vec<SampleResult> = results.into_iter().map(|(_, r)| r).collect();

    std::fs::create_dir_all(&config.output_dir)?;
    let paths = EvalPaths {
        results: config.output_dir.join("results.jsonl"),
        report_json: config.output_dir.join("report.json"),
        report_csv: config.output_dir.join("report.csv"),
    };
    write_results(&paths.results, &results)?;

    let outcomes = results_to_outcomes(&results);
    let report = metrics::build_report(&outcomes, &config.metrics)?;
    std::fs::write(
        &paths.report_json,
        serde_json::to_string_pretty(&report.to_json_value()).expect("report serializes") + "\n",
    )?;
    std::fs::write(&paths.report_csv, report.to_csv_line() + "\n")?;

    Ok(EvalRun {
        results,
        report,
        paths,
    })
}

async fn run_indexed(
    idx: usize,
    sample: &Sample,
    config: &RunConfig,
    model: &dyn ModelClient,
    tool: &ToolClient,
) -> (usize, SampleResult) {
    let result = match config.protocol {
        ProtocolKind::Piter => {
            // The single-stage protocol queries the tool with the expression
            // itself; there is no model-chosen phrase.
            match tool.predict(sample, &sample.expression) {
                Ok(pred) => run_piter(sample, &pred, model, config).await,
                Err(_) => {
                    let missing = ToolPrediction {
                        sample_id: sample.sample_id.clone(),
                        bbox: None,
                        source: crate::toolsim::PredictionSource::Cached,
                        category: None,
                    };
                    let mut r = run_piter(sample, &missing, model, config).await;
                    r.flags.push(RunFlag::ToolUnavailable);
                    r
                }
            }
        }
        ProtocolKind::Trrgr => run_trrgr(sample, tool, model, config).await,
    };
    (idx, result)
}

/// Project results onto the `(iou_t, iou_f)` pairs the metric suite consumes.
pub fn results_to_outcomes(results: &[SampleResult]) -> Vec<SampleOutcome> {
    results
        .iter()
        .map(|r| SampleOutcome {
            sample_id: r.sample_id.clone(),
            iou_t: r.iou_t,
            iou_f: r.iou_f,
        })
        .collect()
}

/// Write results as JSONL, one record per line, in the given order.
pub fn write_results(path: &std::path::Path, results: &[SampleResult]) -> Result<(), EvalError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in results {
        writeln!(
            out,
            "{}",
            serde_json::to_string(r).expect("result serializes")
        )?;
    }
    Ok(())
}

/// Read back a results JSONL file.
pub fn load_results(path: &std::path::Path) -> Result<Vec<SampleResult>, EvalError> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut results = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        results.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(results)
}
