//! Evaluation, reward, and simulation toolkit for tool-refined referring
//! grounding.
//!
//! A grounding model is paired with an external referring tool (a detector or
//! segmenter). The tool proposes a box, the model confirms or refines it, and
//! everything downstream is scored from the two IoU values this produces per
//! sample: `iou_t` (tool vs ground truth) and `iou_f` (final prediction vs
//! ground truth).
//!
//! The crate is organized around that flow:
//!
//! - [`geometry`] - box arithmetic, IoU, binary-mask-to-box conversion;
//! - [`trace`] - the tagged two-turn trajectory grammar and answer parsing;
//! - [`rewards`] - format reward and the piecewise refinement reward;
//! - [`grpo`] - rollout groups and group-relative advantages;
//! - [`metrics`] - Acc@tau, CCR, NSRI, FCR, WR and report aggregation;
//! - [`toolsim`] - a seeded synthetic tool with configurable error mixture;
//! - [`dataset`], [`backend`], [`protocol`], [`rollout`] - sample ingestion,
//!   pluggable model/tool backends, the single-stage and two-stage protocol
//!   drivers, and offline rollout reward computation;
//! - [`api`] - request/response types shared by the HTTP service and client.

pub mod api;
pub mod backend;
pub mod config;
pub mod dataset;
pub mod geometry;
pub mod grpo;
pub mod metrics;
pub mod protocol;
pub mod rewards;
pub mod rollout;
pub mod toolsim;
pub mod trace;

pub use config::{ModelBackend, ProtocolKind, RunConfig, ToolBackend};
pub use geometry::{BBox, BinaryMask};
pub use metrics::{MetricsConfig, MetricsReport, SampleOutcome};
pub use rewards::{RewardBreakdown, RewardConfig};
