//! Drives the built `trrgr` binary through the documented workflow:
//! simulate-tool -> eval -> metrics -> render-prompt -> rewards.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn trrgr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trrgr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn check(output: &Output) -> serde_json::Value {
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    serde_json::from_slice(&output.stdout).expect("stdout is JSON")
}

fn write_dataset(dir: &Path, n: usize) -> PathBuf {
    let path = dir.join("dataset.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    for i in 0..n {
        let x1 = 20.0 + (i as f64 * 13.0) % 250.0;
        let y1 = 20.0 + (i as f64 * 17.0) % 180.0;
        writeln!(
            f,
            r#"{{"sample_id": "s{i:03}", "image": "img/{i}.jpg", "width": 640, "height": 480, "expression": "object {i}", "gt_bbox": [{x1}, {y1}, {}, {}]}}"#,
            x1 + 150.0,
            y1 + 110.0,
        )
        .unwrap();
    }
    path
}

fn write_oracle_script(dir: &Path, dataset: &Path) -> PathBuf {
    let path = dir.join("script.jsonl");
    let samples = trrgr_core::dataset::load_dataset(dataset).unwrap();
    let mut f = std::fs::File::create(&path).unwrap();
    for s in &samples {
        let record = serde_json::json!({
            "sample_id": s.sample_id,
            "turn": 0,
            "response": serde_json::json!({"bbox_2d": s.gt_bbox.as_array()}).to_string(),
        });
        writeln!(f, "{record}").unwrap();
    }
    path
}

#[test]
fn full_workflow_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path(), 30);
    let cache = dir.path().join("tool.jsonl");

    // simulate-tool
    let out = trrgr(&[
        "simulate-tool",
        "--dataset",
        dataset.to_str().unwrap(),
        "--preset",
        "weak_gdt",
        "--seed",
        "3",
        "--out",
        cache.to_str().unwrap(),
    ]);
    let sim = check(&out);
    assert_eq!(sim["n"], 30);
    assert!(cache.exists());

    // eval (single-stage protocol, oracle script)
    let script = write_oracle_script(dir.path(), &dataset);
    let run_dir = dir.path().join("run");
    let out = trrgr(&[
        "eval",
        "--protocol",
        "piter",
        "--dataset",
        dataset.to_str().unwrap(),
        "--tool",
        &format!("cache:{}", cache.display()),
        "--model",
        &format!("scripted:{}", script.display()),
        "--out",
        run_dir.to_str().unwrap(),
        "--parallelism",
        "4",
    ]);
    let eval = check(&out);
    assert_eq!(eval["n"], 30);
    assert_eq!(eval["report"]["acc_pct"], 100.0);
    let results = run_dir.join("results.jsonl");
    assert!(results.exists());

    // metrics over the persisted results
    let out = trrgr(&["metrics", "--results", results.to_str().unwrap()]);
    let report = check(&out);
    assert_eq!(report["acc_pct"], 100.0);
    assert_eq!(report["n"], 30);

    // metrics --csv prints one line
    let out = trrgr(&["metrics", "--results", results.to_str().unwrap(), "--csv"]);
    assert!(out.status.success());
    let csv = String::from_utf8_lossy(&out.stdout);
    assert_eq!(csv.trim().lines().count(), 1);

    // render-prompt for one sample
    let out = trrgr(&[
        "render-prompt",
        "--dataset",
        dataset.to_str().unwrap(),
        "--tool",
        cache.to_str().unwrap(),
        "--sample-id",
        "s001",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("--- s001"));
    assert!(text.contains("object 1"));
}

#[test]
fn eval_reads_config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path(), 6);
    let script = write_oracle_script(dir.path(), &dataset);

    let config_path = dir.path().join("run.json");
    let config = serde_json::json!({
        "protocol": "piter",
        "dataset": dataset,
        "tool": "sim:weak_gdt",
        "model": format!("scripted:{}", script.display()),
        "out": dir.path().join("from_config"),
        "seed": 11,
    });
    std::fs::write(&config_path, config.to_string()).unwrap();

    // Flag overrides the config's output dir.
    let override_dir = dir.path().join("overridden");
    let out = trrgr(&[
        "eval",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        override_dir.to_str().unwrap(),
    ]);
    let eval = check(&out);
    assert_eq!(eval["n"], 6);
    assert!(override_dir.join("results.jsonl").exists());
    assert!(!dir.path().join("from_config").exists());
}

#[test]
fn rewards_subcommand_writes_scored_groups() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path(), 2);
    let samples = trrgr_core::dataset::load_dataset(&dataset).unwrap();

    let payload = serde_json::json!({"bbox_2d": samples[0].gt_bbox.as_array()});
    let group = serde_json::json!({
        "sample_id": "s000",
        "trajectories": [
            {
                "turn1": "<think>a</think>",
                "turn2": format!("<rethink>b</rethink><answer>{payload}</answer>"),
                "tool_bbox": [0.0, 0.0, 5.0, 5.0],
            },
            {"turn1": "nope", "turn2": "nope", "tool_bbox": [0.0, 0.0, 5.0, 5.0]},
        ],
    });
    let trajectories = dir.path().join("groups.jsonl");
    std::fs::write(&trajectories, group.to_string() + "\n").unwrap();

    let out_path = dir.path().join("scored.jsonl");
    let out = trrgr(&[
        "rewards",
        "--trajectories",
        trajectories.to_str().unwrap(),
        "--dataset",
        dataset.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    let response = check(&out);
    assert_eq!(response["groups"], 1);
    assert_eq!(response["trajectories"], 2);
    assert!(out_path.exists());
}

#[test]
fn unknown_preset_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = write_dataset(dir.path(), 1);
    let out = trrgr(&[
        "simulate-tool",
        "--dataset",
        dataset.to_str().unwrap(),
        "--preset",
        "bogus",
        "--out",
        dir.path().join("x.jsonl").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bogus"), "stderr: {stderr}");
}
