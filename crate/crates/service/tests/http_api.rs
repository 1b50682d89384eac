//! End-to-end exercise of the HTTP surface through the typed client.

use std::io::Write;
use std::path::{Path, PathBuf};
use trrgr_client::{Client, ClientError};
use trrgr_core::api::*;
use trrgr_core::config::ProtocolKind;

async fn start() -> Client {
    let (url, _handle) = trrgr_service::spawn_local().await.unwrap();
    Client::new(url)
}

fn write_dataset(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("dataset.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    for i in 0..n {
        let x1 = 10.0 + (i as f64 * 7.0) % 300.0;
        let y1 = 10.0 + (i as f64 * 11.0) % 200.0;
        writeln!(
            f,
            r#"{{"sample_id": "s{i:03}", "image": "img/{i}.jpg", "width": 640, "height": 480, "expression": "object {i}", "gt_bbox": [{x1}, {y1}, {}, {}]}}"#,
            x1 + 120.0,
            y1 + 90.0,
        )
        .unwrap();
    }
    path
}

/// Echo script: answer with the cached tool box, or `null` when absent.
fn write_echo_script(dir: &Path, cache_path: &Path) -> PathBuf {
    let path = dir.join("script.jsonl");
    let cache = trrgr_core::toolsim::load_cache(cache_path).unwrap();
    let mut f = std::fs::File::create(&path).unwrap();
    for pred in cache.values() {
        let response = match pred.bbox {
            Some(b) => serde_json::json!({"bbox_2d": b.as_array()}).to_string(),
            None => "null".to_string(),
        };
        let record = serde_json::json!({
            "sample_id": pred.sample_id,
            "turn": 0,
            "response": response,
        });
        writeln!(f, "{record}").unwrap();
    }
    path
}

#[tokio::test]
async fn health_reports_ok() {
    let client = start().await;
    let health = client.health().await.unwrap();
    assert_eq!(health["status"], "ok");
}

#[tokio::test]
async fn full_eval_flow_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let client = start().await;
    let dataset = write_dataset(dir.path(), 60);

    // Simulate a weak tool cache.
    let cache_path = dir.path().join("tool.jsonl");
    let sim = client
        .simulate_tool(&SimulateRequest {
            dataset: dataset.clone(),
            preset: "weak_gdt".into(),
            seed: 7,
            out: cache_path.clone(),
        })
        .await
        .unwrap();
    assert_eq!(sim.n, 60);
    assert!(sim.category_counts.values().sum::<usize>() == 60);

    // Evaluate the echo policy against it.
    let script = write_echo_script(dir.path(), &cache_path);
    let out_dir = dir.path().join("run");
    let response = client
        .eval(&EvalRequest {
            protocol: ProtocolKind::Piter,
            dataset: dataset.clone(),
            tool: trrgr_core::config::ToolBackend::Cache {
                path: cache_path.clone(),
            },
            model: trrgr_core::config::ModelBackend::Scripted { path: script },
            output_dir: out_dir.clone(),
            system_prompt: None,
            piter_template: None,
            metrics: None,
            rewards: None,
            parallelism: Some(4),
        })
        .await
        .unwrap();
    assert_eq!(response.n, 60);
    // Echo closure shows up in the report.
    assert_eq!(response.report["wr_pct"], 0.0);
    assert_eq!(response.report["fcr_pct"], 100.0);
    assert!(out_dir.join("results.jsonl").exists());

    // The run registry knows about it.
    let runs = client.list_runs().await.unwrap();
    assert_eq!(runs.len(), 1);
    assert_eq!(runs[0].run_id, response.run_id);
    assert_eq!(runs[0].status, RunStatus::Completed);
    let run = client.get_run(&response.run_id).await.unwrap();
    assert_eq!(run.report, Some(response.report.clone()));

    // Metrics over the persisted results reproduce the report.
    let metrics = client
        .metrics(&MetricsRequest {
            results: Some(out_dir.join("results.jsonl")),
            outcomes: None,
            config: None,
        })
        .await
        .unwrap();
    assert_eq!(metrics.report, response.report);
    assert!(!metrics.csv.is_empty());
}

#[tokio::test]
async fn metrics_accepts_inline_outcomes() {
    let client = start().await;
    let outcomes = vec![
        trrgr_core::SampleOutcome::new("a", 0.2, 0.8).unwrap(),
        trrgr_core::SampleOutcome::new("b", 0.7, 0.7).unwrap(),
    ];
    let response = client
        .metrics(&MetricsRequest {
            results: None,
            outcomes: Some(outcomes),
            config: None,
        })
        .await
        .unwrap();
    assert_eq!(response.report["n"], 2);
    assert_eq!(response.report["acc_pct"], 100.0);
    assert_eq!(response.report["ccr_pct"], 100.0);
}

#[tokio::test]
async fn rewards_endpoint_scores_groups() {
    let dir = tempfile::tempdir().unwrap();
    let client = start().await;
    let dataset = write_dataset(dir.path(), 2);

    let samples = trrgr_core::dataset::load_dataset(&dataset).unwrap();
    let gt = samples[0].gt_bbox;
    let good2 = format!(
        "<rethink>ok</rethink><answer>{}</answer>",
        serde_json::json!({"bbox_2d": gt.as_array()})
    );
    let trajectories = dir.path().join("groups.jsonl");
    let group = serde_json::json!({
        "sample_id": "s000",
        "trajectories": [
            {"turn1": "<think>a</think>", "turn2": good2, "tool_bbox": null},
            {"turn1": "no tags", "turn2": "none", "tool_bbox": null},
        ],
    });
    std::fs::write(&trajectories, group.to_string() + "\n").unwrap();

    let out = dir.path().join("scored.jsonl");
    let response = client
        .rewards(&RewardsRequest {
            trajectories,
            dataset,
            out: out.clone(),
            rewards: None,
        })
        .await
        .unwrap();
    assert_eq!(response.groups, 1);
    assert_eq!(response.trajectories, 2);
    let text = std::fs::read_to_string(&out).unwrap();
    let scored: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let a0 = scored["advantages"][0].as_f64().unwrap();
    let a1 = scored["advantages"][1].as_f64().unwrap();
    assert!((a0 - 1.0).abs() < 1e-5, "a0 = {a0}");
    assert!((a1 + 1.0).abs() < 1e-5, "a1 = {a1}");
}

#[tokio::test]
async fn render_prompt_injects_box_and_null() {
    let dir = tempfile::tempdir().unwrap();
    let client = start().await;
    let dataset = write_dataset(dir.path(), 2);

    let cache = dir.path().join("tool.jsonl");
    let mut f = std::fs::File::create(&cache).unwrap();
    writeln!(
        f,
        r#"{{"sample_id": "s000", "tool": "t", "bbox": [1, 2, 3, 4]}}"#
    )
    .unwrap();
    writeln!(f, r#"{{"sample_id": "s001", "tool": "t", "bbox": null}}"#).unwrap();
    drop(f);

    let response = client
        .render_prompt(&RenderPromptRequest {
            dataset: dataset.clone(),
            tool: cache.clone(),
            sample_id: None,
            template: Some("Q={Question} T={tool results}".into()),
        })
        .await
        .unwrap();
    assert_eq!(response.prompts.len(), 2);
    assert_eq!(response.prompts[0].prompt, "Q=object 0 T=[1, 2, 3, 4]");
    assert_eq!(response.prompts[1].prompt, "Q=object 1 T=null");

    let one = client
        .render_prompt(&RenderPromptRequest {
            dataset,
            tool: cache,
            sample_id: Some("s001".into()),
            template: Some("{Question}//{tool results}".into()),
        })
        .await
        .unwrap();
    assert_eq!(one.prompts.len(), 1);
    assert_eq!(one.prompts[0].prompt, "object 1//null");
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let client = start().await;

    // Unknown run -> 404.
    let err = client.get_run("nope").await.unwrap_err();
    assert!(matches!(err, ClientError::Service { status: 404, .. }));

    // Unknown preset -> 400.
    let dataset = write_dataset(dir.path(), 1);
    let err = client
        .simulate_tool(&SimulateRequest {
            dataset,
            preset: "no_such_tool".into(),
            seed: 0,
            out: dir.path().join("x.jsonl"),
        })
        .await
        .unwrap_err();
    match err {
        ClientError::Service { status, message } => {
            assert_eq!(status, 400);
            assert!(message.contains("no_such_tool"));
        }
        other => panic!("unexpected error {other:?}"),
    }

    // Ambiguous metrics request -> 400.
    let err = client
        .metrics(&MetricsRequest::default())
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Service { status: 400, .. }));
}
