//! Refinement metric suite: Acc@tau, CCR, NSRI gains, NSRI_w, FCR, WR, and
//! per-split report aggregation.
//!
//! Every metric is a pure function of the per-sample `(iou_t, iou_f)` pairs.
//! The tool-wrong subset `S_w` holds samples with `iou_t < tau`, the
//! tool-correct subset `S_c` the rest; metrics over an empty subset are
//! reported as absent instead of 0 so an empty denominator never reads as a
//! failure. Aggregation folds in sample_id order, making reports bit-identical
//! regardless of the order outcomes were produced in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric requires at least one outcome")]
    EmptyInput,
    #[error("iou value {0} outside [0, 1]")]
    IouOutOfRange(f64),
    #[error("metrics threshold must satisfy 0 < tau < 1, got {0}")]
    InvalidThreshold(f64),
    #[error("follow tolerance must be non-negative, got {0}")]
    InvalidEpsilon(f64),
}

/// The `(iou_t, iou_f)` pair for one sample - the sole input to every
/// refinement metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub sample_id: String,
    pub iou_t: f64,
    pub iou_f: f64,
}

impl SampleOutcome {
    pub fn new(sample_id: impl Into<String>, iou_t: f64, iou_f: f64) -> Result<Self, MetricsError> {
        for v in [iou_t, iou_f] {
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricsError::IouOutOfRange(v));
            }
        }
        Ok(Self {
            sample_id: sample_id.into(),
            iou_t,
            iou_f,
        })
    }
}

/// Threshold and follow tolerance for the metric suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub tau: f64,
    pub epsilon: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            epsilon: 0.05,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(MetricsError::InvalidThreshold(self.tau));
        }
        if self.epsilon < 0.0 {
            return Err(MetricsError::InvalidEpsilon(self.epsilon));
        }
        Ok(())
    }
}

/// Full per-split metric report.
///
/// `ccr`/`nsri_w` are absent when `S_w` is empty and `fcr` when `S_c` is;
/// the subset counts are always emitted so the absence is interpretable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub acc: f64,
    pub s_w_count: usize,
    pub ccr: Option<f64>,
    pub nsri_w: Option<f64>,
    pub s_c_count: usize,
    pub fcr: Option<f64>,
    pub wr: f64,
    pub follow_count: usize,
    pub worsen_count: usize,
}

/// Fraction of samples whose final IoU meets the threshold (inclusive).
pub fn acc_at(outcomes: &[SampleOutcome], tau: f64) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = outcomes.iter().filter(|o| o.iou_f >= tau).count();
    Ok(hits as f64 / outcomes.len() as f64)
}

/// Critical correct rate: over `S_w`, the fraction of successful
/// refinements (`iou_f >= tau`). Absent when no tool-wrong samples exist.
pub fn ccr(outcomes: &[SampleOutcome], config: &MetricsConfig) -> Option<f64> {
    let wrong: Vec<&SampleOutcome> = outcomes.iter().filter(|o| o.iou_t < config.tau).collect();
    if wrong.is_empty() {
        return None;
    }
    let fixed = wrong.iter().filter(|o| o.iou_f >= config.tau).count();
    Some(fixed as f64 / wrong.len() as f64)
}

/// Normalized signed relative IoU gain for one sample.
///
/// Improvements are scaled by the available headroom `1 - iou_t`, declines
/// by the available floor `iou_t`; equal IoUs yield 0. The branch conditions
/// keep both denominators strictly positive, and the result always lies in
/// `[-1, 1]` with the sign of `iou_f - iou_t`.
pub fn nsri_gain(iou_t: f64, iou_f: f64) -> f64 {
    if iou_f > iou_t {
        (iou_f - iou_t) / (1.0 - iou_t)
    } else if iou_f < iou_t {
        (iou_f - iou_t) / iou_t
    } else {
        0.0
    }
}

/// Mean NSRI gain over `S_w`; absent when `S_w` is empty.
pub fn nsri_w(outcomes: &[SampleOutcome], config: &MetricsConfig) -> Option<f64> {
    let mut sorted: Vec<&SampleOutcome> =
        outcomes.iter().filter(|o| o.iou_t < config.tau).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let sum: f64 = sorted.iter().map(|o| nsri_gain(o.iou_t, o.iou_f)).sum();
    Some(sum / sorted.len() as f64)
}

/// Follow correct rate: over `S_c`, the fraction whose IoU stayed within
/// `epsilon` of the tool's (strict inequality). Absent when `S_c` is empty.
pub fn fcr(outcomes: &[SampleOutcome], config: &MetricsConfig) -> Option<f64> {
    let correct: Vec<&SampleOutcome> = outcomes.iter().filter(|o| o.iou_t >= config.tau).collect();
    if correct.is_empty() {
        return None;
    }
    let followed = correct
        .iter()
        .filter(|o| (o.iou_f - o.iou_t).abs() < config.epsilon)
        .count();
    Some(followed as f64 / correct.len() as f64)
}

/// Worsen rate: fraction of all samples with a strict IoU degradation.
pub fn wr(outcomes: &[SampleOutcome]) -> Result<f64, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let worsened = outcomes.iter().filter(|o| o.iou_f < o.iou_t).count();
    Ok(worsened as f64 / outcomes.len() as f64)
}

/// Compute the whole report in one pass over a canonical ordering.
pub fn build_report(
    outcomes: &[SampleOutcome],
    config: &MetricsConfig,
) -> Result<MetricsReport, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    config.validate()?;

    let mut sorted: Vec<&SampleOutcome> = outcomes.iter().collect();
    sorted.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

    let n = sorted.len();
    let mut acc_hits = 0usize;
    let mut s_w_count = 0usize;
    let mut s_c_count = 0usize;
    let mut ccr_hits = 0usize;
    let mut nsri_sum = 0.0f64;
    let mut follow_count = 0usize;
    let mut worsen_count = 0usize;

    for o in &sorted {
        if o.iou_f >= config.tau {
            acc_hits += 1;
        }
        if o.iou_t < config.tau {
            s_w_count += 1;
            if o.iou_f >= config.tau {
                ccr_hits += 1;
            }
            nsri_sum += nsri_gain(o.iou_t, o.iou_f);
        } else {
            s_c_count += 1;
            if (o.iou_f - o.iou_t).abs() < config.epsilon {
                follow_count += 1;
            }
        }
        if o.iou_f < o.iou_t {
            worsen_count += 1;
        }
    }

    Ok(MetricsReport {
        n,
        acc: acc_hits as f64 / n as f64,
        s_w_count,
        ccr: (s_w_count > 0).then(|| ccr_hits as f64 / s_w_count as f64),
        nsri_w: (s_w_count > 0).then(|| nsri_sum / s_w_count as f64),
        s_c_count,
        fcr: (s_c_count > 0).then(|| follow_count as f64 / s_c_count as f64),
        wr: worsen_count as f64 / n as f64,
        follow_count,
        worsen_count,
    })
}

/// Macro (unweighted) average over named per-split accuracies.
pub fn aggregate_splits(splits: &[(String, f64)]) -> Result<f64, MetricsError> {
    if splits.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(splits.iter().map(|(_, acc)| acc).sum::<f64>() / splits.len() as f64)
}

fn pct4(v: f64) -> f64 {
    (v * 100.0 * 10_000.0).round() / 10_000.0
}

impl MetricsReport {
    /// Report JSON with rate metrics rendered as percentages at 4 decimal
    /// places; absent metrics are null.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "acc_pct": pct4(self.acc),
            "s_w_count": self.s_w_count,
            "ccr_pct": self.ccr.map(pct4),
            "nsri_w_pct": self.nsri_w.map(pct4),
            "s_c_count": self.s_c_count,
            "fcr_pct": self.fcr.map(pct4),
            "wr_pct": pct4(self.wr),
            "follow_count": self.follow_count,
            "worsen_count": self.worsen_count,
        })
    }

    /// One CSV line for table assembly, columns:
    /// `n,acc,s_w_count,ccr,nsri_w,s_c_count,fcr,wr,follow_count,worsen_count`
    /// with rates as percentages at 4 decimal places and absent metrics as
    /// empty fields.
    pub fn to_csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{:.4}", pct4(x))).unwrap_or_default();
        format!(
            "{},{:.4},{},{},{},{},{},{:.4},{},{}",
            self.n,
            pct4(self.acc),
            self.s_w_count,
            opt(self.ccr),
            opt(self.nsri_w),
            self.s_c_count,
            opt(self.fcr),
            pct4(self.wr),
            self.follow_count,
            self.worsen_count,
        )
    }
}
