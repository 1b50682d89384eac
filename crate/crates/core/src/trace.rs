//! Parsing and validation of model output against the two-turn trajectory
//! grammar and the single-stage JSON answer schema.
//!
//! The grammar is fixed ASCII tags: turn 1 carries `<think>...</think>` and
//! optionally a `<tool_call>...</tool_call>` block; turn 2 carries
//! `<rethink>...</rethink>` followed by `<answer>...</answer>` whose payload
//! is a JSON object `{"bbox_2d": [x1, y1, x2, y2]}`. Exactly one occurrence
//! of each required tag is allowed. Every violation is reported as a defect
//! code rather than an abort, so the format reward can police structure while
//! evaluation keeps running.

use crate::geometry::BBox;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tag names recognized by the trajectory grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tag {
    Think,
    Rethink,
    Answer,
    ToolCall,
}

impl Tag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Tag::Think => "think",
            Tag::Rethink => "rethink",
            Tag::Answer => "answer",
            Tag::ToolCall => "tool_call",
        }
    }
}

/// Structural defects a trajectory can carry; an empty set means the format
/// reward fires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormatDefect {
    MissingThink,
    MissingRethink,
    MissingAnswer,
    DuplicateTag,
    TagOrderViolation,
    MalformedAnswerJson,
    InvalidBoxGeometry,
    StrayAnswerContent,
}

impl std::fmt::Display for FormatDefect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Validity verdict over a trajectory: valid iff no defects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVerdict {
    pub valid: bool,
    pub defects: Vec<FormatDefect>,
}

impl FormatVerdict {
    pub fn new(mut defects: Vec<FormatDefect>) -> Self {
        defects.dedup();
        Self {
            valid: defects.is_empty(),
            defects,
        }
    }

    pub fn valid() -> Self {
        Self::new(Vec::new())
    }
}

/// Structured decomposition of a two-turn model output.
///
/// `verdict.valid` implies `think`, `rethink`, and `answer_box` are all
/// present. `answer_box` may also be present on invalid trajectories when a
/// box was recoverable (e.g. stray prose around otherwise well-formed answer
/// JSON); reward gating still zeroes such trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedTrajectory {
    pub think: Option<String>,
    pub tool_action: Option<String>,
    pub rethink: Option<String>,
    pub answer_box: Option<BBox>,
    pub verdict: FormatVerdict,
}

impl ParsedTrajectory {
    pub fn format_valid(&self) -> bool {
        self.verdict.valid
    }

    /// Render back to the tagged two-turn text form. `None` when a required
    /// component is missing (such trajectories have no canonical rendering).
    pub fn render_turns(&self) -> Option<(String, String)> {
        let think = self.think.as_ref()?;
        let rethink = self.rethink.as_ref()?;
        let answer = self.answer_box.as_ref()?;
        let mut turn1 = format!("<think>{think}</think>");
        if let Some(action) = &self.tool_action {
            let call = serde_json::json!({
                "name": "ground",
                "arguments": {"phrase": action},
            });
            turn1.push_str(&format!("<tool_call>{call}</tool_call>"));
        }
        let payload = serde_json::json!({ "bbox_2d": answer.as_array() });
        let turn2 = format!("<rethink>{rethink}</rethink><answer>{payload}</answer>");
        Some((turn1, turn2))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("more than one <{tag}> tag")]
    MultipleOccurrences { tag: &'static str },
    #[error("answer payload is not the required JSON object: {reason}")]
    MalformedAnswerJson { reason: String },
    #[error("answer box fails geometry validation: {reason}")]
    InvalidBoxGeometry { reason: String },
    #[error("non-whitespace content around the answer JSON")]
    StrayAnswerContent,
    #[error("tool_call tag present but payload invalid: {reason}")]
    MalformedToolCall { reason: String },
    #[error("no parsable bbox_2d object in output")]
    NoParsableBox,
}

/// Extract the inner text of the unique `<tag>...</tag>` occurrence.
///
/// Returns `Ok(None)` when the tag is absent or unclosed; more than one
/// opening tag is an error so duplicate tags can be policed distinctly.
pub fn extract_tag(text: &str, tag: Tag) -> Result<Option<&str>, TraceError> {
    let open = format!("<{}>", tag.as_str());
    let close = format!("</{}>", tag.as_str());
    let mut opens = text.match_indices(&open);
    let first = match opens.next() {
        Some((i, _)) => i,
        None => return Ok(None),
    };
    if opens.next().is_some() {
        return Err(TraceError::MultipleOccurrences { tag: tag.as_str() });
    }
    let inner_start = first + open.len();
    match text[inner_start..].find(&close) {
        Some(rel) => Ok(Some(&text[inner_start..inner_start + rel])),
        None => Ok(None),
    }
}

/// Byte offset of the unique opening tag, if any. Used for ordering checks.
fn tag_position(text: &str, tag: Tag) -> Option<usize> {
    let open = format!("<{}>", tag.as_str());
    text.find(&open)
}

fn bbox_from_value(value: &serde_json::Value) -> Result<BBox, TraceError> {
    let arr = value
        .get("bbox_2d")
        .ok_or_else(|| TraceError::MalformedAnswerJson {
            reason: "missing \"bbox_2d\" key".into(),
        })?
        .as_array()
        .ok_or_else(|| TraceError::MalformedAnswerJson {
            reason: "\"bbox_2d\" is not an array".into(),
        })?;
    if arr.len() != 4 {
        return Err(TraceError::MalformedAnswerJson {
            reason: format!("\"bbox_2d\" has {} entries, expected 4", arr.len()),
        });
    }
    let mut coords = [0.0f64; 4];
    for (i, v) in arr.iter().enumerate() {
        coords[i] = v.as_f64().ok_or_else(|| TraceError::MalformedAnswerJson {
            reason: format!("\"bbox_2d\"[{i}] is not a number"),
        })?;
    }
    BBox::new(coords[0], coords[1], coords[2], coords[3]).map_err(|e| {
        TraceError::InvalidBoxGeometry {
            reason: e.to_string(),
        }
    })
}

/// Parse the inner content of an `<answer>` tag into a box.
///
/// The payload must be exactly one JSON object with a `"bbox_2d"` key mapping
/// to four numbers (integers or floats). Non-whitespace around an otherwise
/// recoverable object is reported as stray content.
pub fn parse_answer(text: &str) -> Result<BBox, TraceError> {
    let trimmed = text.trim();
    match serde_json::from_str::<serde_json::Value>(trimmed) {
        Ok(value) if value.is_object() => bbox_from_value(&value),
        _ => {
            // Not a clean single object. If a box is still recoverable the
            // content is stray, otherwise it is malformed.
            match scan_for_bbox(trimmed) {
                Some(_) => Err(TraceError::StrayAnswerContent),
                None => Err(TraceError::MalformedAnswerJson {
                    reason: "payload is not a JSON object".into(),
                }),
            }
        }
    }
}

/// Parse the tool query phrase from a first-turn output.
///
/// The harness tool-call syntax is a `<tool_call>` tag wrapping
/// `{"name": "ground", "arguments": {"phrase": ...}}`. Absent tag means the
/// model chose not to call the tool.
pub fn parse_tool_action(text: &str) -> Result<Option<String>, TraceError> {
    let inner = match extract_tag(text, Tag::ToolCall) {
        Ok(Some(inner)) => inner,
        Ok(None) => {
            // An opening tag without a close is malformed, not absent.
            if text.contains("<tool_call>") {
                return Err(TraceError::MalformedToolCall {
                    reason: "unclosed <tool_call> tag".into(),
                });
            }
            return Ok(None);
        }
        Err(TraceError::MultipleOccurrences { .. }) => {
            return Err(TraceError::MalformedToolCall {
                reason: "more than one <tool_call> tag".into(),
            })
        }
        Err(e) => return Err(e),
    };
    let value: serde_json::Value =
        serde_json::from_str(inner.trim()).map_err(|e| TraceError::MalformedToolCall {
            reason: format!("invalid JSON: {e}"),
        })?;
    let phrase = value
        .get("arguments")
        .and_then(|a| a.get("phrase"))
        .and_then(|p| p.as_str())
        .ok_or_else(|| TraceError::MalformedToolCall {
            reason: "missing arguments.phrase".into(),
        })?;
    Ok(Some(phrase.to_string()))
}

/// Validate a two-turn output pair against the trajectory grammar.
///
/// All failures become defects in the verdict; this never errors, so a batch
/// of arbitrary model outputs can be scored without aborting.
pub fn validate_trajectory(turn1: &str, turn2: &str) -> ParsedTrajectory {
    let mut defects = Vec::new();

    let think = match extract_tag(turn1, Tag::Think) {
        Ok(Some(inner)) => Some(inner.to_string()),
        Ok(None) => {
            defects.push(FormatDefect::MissingThink);
            None
        }
        Err(_) => {
            defects.push(FormatDefect::DuplicateTag);
            None
        }
    };

    let tool_action = parse_tool_action(turn1).unwrap_or(None);

    let rethink = match extract_tag(turn2, Tag::Rethink) {
        Ok(Some(inner)) => Some(inner.to_string()),
        Ok(None) => {
            defects.push(FormatDefect::MissingRethink);
            None
        }
        Err(_) => {
            defects.push(FormatDefect::DuplicateTag);
            None
        }
    };

    let mut answer_box = None;
    match extract_tag(turn2, Tag::Answer) {
        Ok(Some(inner)) => match parse_answer(inner) {
            Ok(bbox) => answer_box = Some(bbox),
            Err(TraceError::StrayAnswerContent) => {
                defects.push(FormatDefect::StrayAnswerContent);
                // The box is recoverable even though the format reward is 0.
                answer_box = scan_for_bbox(inner);
            }
            Err(TraceError::InvalidBoxGeometry { .. }) => {
                defects.push(FormatDefect::InvalidBoxGeometry)
            }
            Err(_) => defects.push(FormatDefect::MalformedAnswerJson),
        },
        Ok(None) => defects.push(FormatDefect::MissingAnswer),
        Err(_) => defects.push(FormatDefect::DuplicateTag),
    }

    // The schema's stated sequence: rethink precedes answer.
    if let (Some(r), Some(a)) = (
        tag_position(turn2, Tag::Rethink),
        tag_position(turn2, Tag::Answer),
    ) {
        if a < r {
            defects.push(FormatDefect::TagOrderViolation);
        }
    }

    ParsedTrajectory {
        think,
        tool_action,
        rethink,
        answer_box,
        verdict: FormatVerdict::new(defects),
    }
}

/// Scan arbitrary text for the first embedded JSON object carrying a valid
/// `bbox_2d` with four numbers. Tolerates code fences, leading prose, and
/// trailing junk.
fn scan_for_bbox(text: &str) -> Option<BBox> {
    for (start, _) in text.match_indices('{') {
        let tail = &text[start..];
        let mut stream = serde_json::Deserializer::from_str(tail).into_iter::<serde_json::Value>();
        if let Some(Ok(value)) = stream.next() {
            if let Ok(bbox) = bbox_from_value(&value) {
                return Some(bbox);
            }
        }
    }
    None
}

/// Parse a single-stage response into a box.
///
/// Accepts the first JSON object containing `"bbox_2d"` with four numbers,
/// whether bare, fenced in markdown, or preceded by prose. Never panics on
/// arbitrary input.
pub fn parse_piter_output(text: &str) -> Result<BBox, TraceError> {
    scan_for_bbox(text).ok_or(TraceError::NoParsableBox)
}
