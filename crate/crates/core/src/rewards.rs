//! Rule-based trajectory rewards: structural format reward, the two-case
//! piecewise refinement reward, and the dense IoU baseline used for reward
//! ablations.
//!
//! The refinement reward pays 0.5 for confirming an already-correct tool
//! box (both IoUs at or above the threshold) and 1.0 for correcting a wrong
//! one (tool below, final at or above). Correcting always outscores
//! confirming; the two cases are disjoint by construction.

use crate::trace::FormatVerdict;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("reward threshold must satisfy 0 < tau < 1, got {0}")]
    InvalidThreshold(f64),
}

/// Reward computation knobs.
///
/// `gate_on_format` zeroes the total for format-invalid trajectories;
/// `include_iou_baseline` adds the dense IoU term used by the reward
/// ablation. Both default to the piecewise setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub threshold: f64,
    pub gate_on_format: bool,
    pub include_iou_baseline: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            gate_on_format: true,
            include_iou_baseline: false,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(RewardError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

/// Per-trajectory reward components and their configured combination.
///
/// At most one of `refine_confirm` and `refine_correct` is nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub refine_confirm: f64,
    pub refine_correct: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou_baseline: Option<f64>,
    pub total: f64,
}

impl RewardBreakdown {
    /// Compute every component for one trajectory outcome.
    pub fn compute(verdict: &FormatVerdict, iou_t: f64, iou_f: f64, config: &RewardConfig) -> Self {
        breakdown_from_parts(format_reward(verdict), iou_t, iou_f, config)
    }
}

/// Build a breakdown from an already-decided format score, for protocols
/// whose format discipline is not the tagged trajectory grammar.
pub fn breakdown_from_parts(
    format: f64,
    iou_t: f64,
    iou_f: f64,
    config: &RewardConfig,
) -> RewardBreakdown {
    let (refine_confirm, refine_correct) = refinement_reward(iou_t, iou_f, config.threshold);
    let iou_baseline = config
        .include_iou_baseline
        .then(|| iou_baseline_reward(iou_f));
    let total = combine(format, refine_confirm, refine_correct, iou_baseline, config);
    RewardBreakdown {
        format,
        refine_confirm,
        refine_correct,
        iou_baseline,
        total,
    }
}

/// 1 iff every tag is correctly formatted, otherwise 0.
pub fn format_reward(verdict: &FormatVerdict) -> f64 {
    if verdict.valid {
        1.0
    } else {
        0.0
    }
}

/// The piecewise refinement reward `(confirm, correct)`.
///
/// Confirm pays 0.5 when `iou_t >= tau` and `iou_f >= tau`; correct pays 1.0
/// when `iou_t < tau` and `iou_f >= tau`; everything else pays nothing. Both
/// boundaries are inclusive on the stated side.
pub fn refinement_reward(iou_t: f64, iou_f: f64, tau: f64) -> (f64, f64) {
    if iou_t >= tau && iou_f >= tau {
        (0.5, 0.0)
    } else if iou_t < tau && iou_f >= tau {
        (0.0, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// Dense ablation alternative: the raw final IoU.
pub fn iou_baseline_reward(iou_f: f64) -> f64 {
    iou_f
}

/// Combine components into the scalar fed to group advantages.
pub fn total_reward(verdict: &FormatVerdict, iou_t: f64, iou_f: f64, config: &RewardConfig) -> f64 {
    RewardBreakdown::compute(verdict, iou_t, iou_f, config).total
}

fn combine(
    format: f64,
    confirm: f64,
    correct: f64,
    iou_baseline: Option<f64>,
    config: &RewardConfig,
) -> f64 {
    if config.gate_on_format && format == 0.0 {
        return 0.0;
    }
    format + confirm + correct + iou_baseline.unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{FormatDefect, FormatVerdict};
    use proptest::prelude::*;

    #[test]
    fn format_reward_examples() {
        assert_eq!(format_reward(&FormatVerdict::valid()), 1.0);
        assert_eq!(
            format_reward(&FormatVerdict::new(vec![FormatDefect::MissingRethink])),
            0.0
        );
        assert_eq!(
            format_reward(&FormatVerdict::new(vec![FormatDefect::MalformedAnswerJson])),
            0.0
        );
    }

    #[test]
    fn refinement_reward_cases() {
        assert_eq!(refinement_reward(0.6, 0.7, 0.5), (0.5, 0.0));
        assert_eq!(refinement_reward(0.3, 0.6, 0.5), (0.0, 1.0));
        assert_eq!(refinement_reward(0.3, 0.4, 0.5), (0.0, 0.0));
        // High tool, low final: degraded output earns nothing.
        assert_eq!(refinement_reward(0.8, 0.2, 0.5), (0.0, 0.0));
        // Boundary semantics are >= on both indicators.
        assert_eq!(refinement_reward(0.5, 0.5, 0.5), (0.5, 0.0));
        assert_eq!(refinement_reward(0.49999, 0.5, 0.5), (0.0, 1.0));
    }

    #[test]
    fn iou_baseline_is_identity() {
        assert_eq!(iou_baseline_reward(0.0), 0.0);
        assert_eq!(iou_baseline_reward(1.0), 1.0);
        assert_eq!(iou_baseline_reward(0.42), 0.42);
    }

    #[test]
    fn total_reward_examples() {
        let valid = FormatVerdict::valid();
        let invalid = FormatVerdict::new(vec![FormatDefect::MissingAnswer]);
        let gated = RewardConfig::default();
        let ungated = RewardConfig {
            gate_on_format: false,
            ..Default::default()
        };

        // format=1, correct fires -> 2.0
        assert_eq!(total_reward(&valid, 0.3, 0.6, &gated), 2.0);
        // gating: format=0 zeroes everything
        assert_eq!(total_reward(&invalid, 0.3, 0.6, &gated), 0.0);
        // ungated sum: confirm alone
        assert_eq!(total_reward(&invalid, 0.6, 0.7, &ungated), 0.5);
    }

    #[test]
    fn breakdown_with_iou_baseline() {
        let config = RewardConfig {
            include_iou_baseline: true,
            ..Default::default()
        };
        let b = RewardBreakdown::compute(&FormatVerdict::valid(), 0.6, 0.7, &config);
        assert_eq!(b.iou_baseline, Some(0.7));
        assert_eq!(b.total, 1.0 + 0.5 + 0.7);
    }

    #[test]
    fn config_validation() {
        assert!(RewardConfig::default().validate().is_ok());
        let bad = RewardConfig {
            threshold: 1.0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(RewardError::InvalidThreshold(1.0)));
    }

    proptest! {
        #[test]
        fn confirm_and_correct_are_mutually_exclusive(
            iou_t in 0.0..=1.0f64,
            iou_f in 0.0..=1.0f64,
            tau in 0.01..=0.99f64,
        ) {
            let (confirm, correct) = refinement_reward(iou_t, iou_f, tau);
            prop_assert!(confirm * correct == 0.0);
            prop_assert!(confirm == 0.0 || confirm == 0.5);
            prop_assert!(correct == 0.0 || correct == 1.0);
            // Correcting a wrong tool outscores confirming a correct one.
            prop_assert!(correct == 0.0 || correct > 0.5);
        }

        #[test]
        fn reward_is_piecewise_constant(
            iou_t in 0.0..=1.0f64,
            iou_f in 0.0..=1.0f64,
            nudge in -0.2..0.2f64,
        ) {
            let tau = 0.5;
            // Perturb without crossing the threshold on either axis.
            let same_side = |v: f64, n: f64| {
                let moved = (v + n).clamp(0.0, 1.0);
                if (v >= tau) == (moved >= tau) { moved } else { v }
            };
            let base = refinement_reward(iou_t, iou_f, tau);
            let moved = refinement_reward(same_side(iou_t, nudge), same_side(iou_f, nudge), tau);
            prop_assert_eq!(base, moved);
        }

        #[test]
        fn correct_reward_steps_exactly_at_tau(iou_f in 0.0..=1.0f64) {
            let tau = 0.5;
            let (_, correct) = refinement_reward(0.2, iou_f, tau);
            prop_assert_eq!(correct, if iou_f >= tau { 1.0 } else { 0.0 });
        }
    }
}
