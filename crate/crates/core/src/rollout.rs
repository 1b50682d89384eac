//! Offline rollout scoring: read trajectory groups, score each trajectory
//! with the trace parser and reward rules, and emit per-group advantages for
//! trainer consumption.
//!
//! Input JSONL, one group per line:
//! `{"sample_id": str, "trajectories": [{"turn1": str, "turn2": str,
//!   "tool_bbox": [x1,y1,x2,y2] | null}, ...]}`.
//! Every group must have the same size (at least 2). Output JSONL carries the
//! per-trajectory IoUs and reward breakdowns plus the group advantages.

use crate::dataset::Sample;
use crate::geometry::BBox;
use crate::grpo::{self, GrpoError};
use crate::rewards::{RewardBreakdown, RewardConfig};
use crate::trace;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("trajectory line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("group for sample {sample_id:?} has {found} trajectories, expected {expected}")]
    GroupSizeMismatch {
        sample_id: String,
        expected: usize,
        found: usize,
    },
    #[error("group references unknown sample {0:?}")]
    UnknownSample(String),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One recorded rollout: the two raw turns plus the tool box it saw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectory {
    pub turn1: String,
    pub turn2: String,
    pub tool_bbox: Option<BBox>,
}

/// A group of raw rollouts for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawGroup {
    pub sample_id: String,
    pub trajectories: Vec<RawTrajectory>,
}

/// A scored rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    pub format_valid: bool,
    pub iou_t: f64,
    pub iou_f: f64,
    pub reward: RewardBreakdown,
}

/// A scored group with advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredGroup {
    pub sample_id: String,
    pub trajectories: Vec<ScoredTrajectory>,
    pub advantages: Vec<f64>,
}

fn score_iou(bbox: Option<&BBox>, sample: &Sample) -> f64 {
    match bbox {
        Some(b) => match b.clamp_to_image(f64::from(sample.width), f64::from(sample.height)) {
            Ok(clamped) => sample.gt_bbox.iou(&clamped),
            Err(_) => 0.0,
        },
        None => 0.0,
    }
}

/// Score one raw group against its sample.
pub fn score_group(
    group: &RawGroup,
    sample: &Sample,
    rewards: &RewardConfig,
    stabilizer: f64,
) -> Result<ScoredGroup, RolloutError> {
    let mut scored = Vec::with_capacity(group.trajectories.len());
    for raw in &group.trajectories {
        let parsed = trace::validate_trajectory(&raw.turn1, &raw.turn2);
        let iou_t = score_iou(raw.tool_bbox.as_ref(), sample);
        let iou_f = score_iou(parsed.answer_box.as_ref(), sample);
        let reward = RewardBreakdown::compute(&parsed.verdict, iou_t, iou_f, rewards);
        scored.push(ScoredTrajectory {
            format_valid: parsed.format_valid(),
            iou_t,
            iou_f,
            reward,
        });
    }
    let rewards_vec: Vec<f64> = scored.iter().map(|t| t.reward.total).collect();
    let advantages = grpo::group_advantages(&rewards_vec, stabilizer)?;
    Ok(ScoredGroup {
        sample_id: group.sample_id.clone(),
        trajectories: scored,
        advantages,
    })
}

/// Read trajectory groups, score them against the dataset, enforce a uniform
/// group size, and write one scored group per output line.
pub fn compute_rollout_rewards(
    trajectory_path: impl AsRef<Path>,
    samples: &[Sample],
    rewards: &RewardConfig,
    out_path: impl AsRef<Path>,
) -> Result<Vec<ScoredGroup>, RolloutError> {
    let by_id: BTreeMap<&str, &Sample> =
        samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();

    let file = std::fs::File::open(trajectory_path)?;
    let reader = std::io::BufReader::new(file);
    let mut groups: Vec<RawGroup> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let group: RawGroup =
            serde_json::from_str(&line).map_err(|e| RolloutError::ParseError {
                line: i + 1,
                reason: e.to_string(),
            })?;
        groups.push(group);
    }

    let expected = groups.first().map(|g| g.trajectories.len()).unwrap_or(0);
    let mut scored_groups = Vec::with_capacity(groups.len());
    for group in &groups {
        if group.trajectories.len() != expected {
            return Err(RolloutError::GroupSizeMismatch {
                sample_id: group.sample_id.clone(),
                expected,
                found: group.trajectories.len(),
            });
        }
        let sample = by_id
            .get(group.sample_id.as_str())
            .ok_or_else(|| RolloutError::UnknownSample(group.sample_id.clone()))?;
        scored_groups.push(score_group(
            group,
            sample,
            rewards,
            grpo::DEFAULT_STABILIZER,
        )?);
    }

    let mut out = std::io::BufWriter::new(std::fs::File::create(out_path)?);
    for g in &scored_groups {
        writeln!(
            out,
            "{}",
            serde_json::to_string(g).expect("group serializes")
        )?;
    }
    Ok(scored_groups)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str) -> Sample {
        Sample {
            sample_id: id.into(),
            image: "img.jpg".into(),
            width: 640,
            height: 480,
            expression: "thing".into(),
            gt_bbox: BBox::new(100.0, 100.0, 300.0, 300.0).unwrap(),
        }
    }

    fn valid_turns(answer: &BBox) -> (String, String) {
        let payload = serde_json::json!({"bbox_2d": answer.as_array()});
        (
            "<think>hm</think>".to_string(),
            format!("<rethink>ok</rethink><answer>{payload}</answer>"),
        )
    }

    fn group_line(sample_id: &str, trajectories: &[(String, String)]) -> String {
        let ts: Vec<serde_json::Value> = trajectories
            .iter()
            .map(|(t1, t2)| {
                serde_json::json!({"turn1": t1, "turn2": t2, "tool_bbox": [0.0, 0.0, 50.0, 50.0]})
            })
            .collect();
        serde_json::json!({"sample_id": sample_id, "trajectories": ts}).to_string()
    }

    #[test]
    fn scores_mixed_group_with_plus_minus_one_advantages() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("groups.jsonl");
        let s = sample("a");

        // 4 valid+correct trajectories (reward 2: format 1 + correct 1,
        // since the tool box is wrong) and 4 invalid ones (reward 0).
        let good = valid_turns(&s.gt_bbox);
        let bad = ("no tags".to_string(), "still no tags".to_string());
        let ts = vec![
            good.clone(),
            bad.clone(),
            good.clone(),
            bad.clone(),
            good.clone(),
            bad.clone(),
            good,
            bad,
        ];
        std::fs::write(&path, group_line("a", &ts) + "\n").unwrap();

        let out = dir.path().join("scored.jsonl");
        let scored = compute_rollout_rewards(&path, &[s], &RewardConfig::default(), &out).unwrap();

        assert_eq!(scored.len(), 1);
        let g = &scored[0];
        assert_eq!(g.trajectories.len(), 8);
        for (i, adv) in g.advantages.iter().enumerate() {
            let expected = if i % 2 == 0 { 1.0 } else { -1.0 };
            assert!((adv - expected).abs() < 1e-5, "{adv} vs {expected}");
        }
        // Output file is one JSON line per group.
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back: ScoredGroup = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(&back, g);
    }

    #[test]
    fn all_equal_rewards_give_zero_advantages() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("groups.jsonl");
        let s = sample("a");
        let good = valid_turns(&s.gt_bbox);
        std::fs::write(&path, group_line("a", &vec![good; 4]) + "\n").unwrap();

        let out = dir.path().join("scored.jsonl");
        let scored = compute_rollout_rewards(&path, &[s], &RewardConfig::default(), &out).unwrap();
        assert_eq!(scored[0].advantages, vec![0.0; 4]);
    }

    #[test]
    fn unknown_sample_and_size_mismatch_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample("a");
        let good = valid_turns(&s.gt_bbox);

        let path = dir.path().join("unknown.jsonl");
        std::fs::write(&path, group_line("ghost", &vec![good.clone(); 2]) + "\n").unwrap();
        let out = dir.path().join("o.jsonl");
        let err = compute_rollout_rewards(
            &path,
            std::slice::from_ref(&s),
            &RewardConfig::default(),
            &out,
        )
        .unwrap_err();
        assert!(matches!(err, RolloutError::UnknownSample(id) if id == "ghost"));

        let path = dir.path().join("sizes.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "{}", group_line("a", &vec![good.clone(); 4])).unwrap();
        writeln!(f, "{}", group_line("a", &vec![good; 3])).unwrap();
        drop(f);
        let err = compute_rollout_rewards(&path, &[s], &RewardConfig::default(), &out).unwrap_err();
        assert!(matches!(
            err,
            RolloutError::GroupSizeMismatch {
                expected: 4,
                found: 3,
                ..
            }
        ));
    }
}
