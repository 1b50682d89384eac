//! Axis-aligned box arithmetic, IoU, and binary-mask-to-box conversion.
//!
//! Coordinates are continuous `[x1, y1, x2, y2]` with the origin at the top
//! left and exclusive right/bottom edges: a pixel at column `c`, row `r`
//! occupies the extent `[c, r, c+1, r+1]`. Under this convention the
//! closed-form IoU of integer boxes agrees exactly with counting pixels on a
//! unit grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("box coordinates must be finite, got [{x1}, {y1}, {x2}, {y2}]")]
    NonFinite { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error(
        "box edges out of order: x1 <= x2 and y1 <= y2 required, got [{x1}, {y1}, {x2}, {y2}]"
    )]
    InvertedBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("mask runs sum to {got} but width x height = {expected}")]
    MaskSizeMismatch { got: u64, expected: u64 },
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: f64, height: f64 },
}

/// Axis-aligned rectangle in absolute pixel coordinates.
///
/// Construction enforces ordered edges and finite values. Degenerate boxes
/// (zero width or height) are valid: model outputs can be degenerate and
/// evaluation must not abort on them. Negative coordinates are representable
/// so that raw model outputs survive parsing; [`BBox::clamp_to_image`]
/// sanitizes them before scoring, and dataset ingestion rejects ground-truth
/// boxes outside the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite()) {
            return Err(GeometryError::NonFinite { x1, y1, x2, y2 });
        }
        if x1 > x2 || y1 > y2 {
            return Err(GeometryError::InvertedBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn x1(&self) -> f64 {
        self.x1
    }

    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn x2(&self) -> f64 {
        self.x2
    }

    pub fn y2(&self) -> f64 {
        self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Area in square pixels; zero for degenerate boxes.
    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    /// Area of overlap with `other`; zero when disjoint.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union with `other`.
    ///
    /// Defined as 0 when the union has zero area (both boxes degenerate), so
    /// degenerate predictions score as failures instead of dividing by zero.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Clip the box into `[0, width] x [0, height]`.
    ///
    /// Clamping is monotone, so edge ordering is preserved.
    pub fn clamp_to_image(&self, width: f64, height: f64) -> Result<BBox, GeometryError> {
        if width <= 0.0 || height <= 0.0 {
            return Err(GeometryError::EmptyImage { width, height });
        }
        Ok(Self {
            x1: self.x1.clamp(0.0, width),
            y1: self.y1.clamp(0.0, height),
            x2: self.x2.clamp(0.0, width),
            y2: self.y2.clamp(0.0, height),
        })
    }

    /// True when every edge lies inside `[0, width] x [0, height]`.
    pub fn inside_image(&self, width: f64, height: f64) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.as_array()
    }
}

impl std::fmt::Display for BBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}, {}, {}, {}]",
            fmt_coord(self.x1),
            fmt_coord(self.y1),
            fmt_coord(self.x2),
            fmt_coord(self.y2)
        )
    }
}

/// Render a coordinate without a trailing `.0` when it is integral.
pub(crate) fn fmt_coord(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Row-major binary mask stored as alternating run lengths of zeros then
/// ones; the first run counts zeros and may be 0.
///
/// Ingestion format: `{"width": int, "height": int, "counts": [int, ...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawMask", into = "RawMask")]
pub struct BinaryMask {
    width: u32,
    height: u32,
    runs: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawMask {
    width: u32,
    height: u32,
    counts: Vec<u64>,
}

impl TryFrom<RawMask> for BinaryMask {
    type Error = GeometryError;

    fn try_from(raw: RawMask) -> Result<Self, Self::Error> {
        BinaryMask::new(raw.width, raw.height, raw.counts)
    }
}

impl From<BinaryMask> for RawMask {
    fn from(m: BinaryMask) -> Self {
        RawMask {
            width: m.width,
            height: m.height,
            counts: m.runs,
        }
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, runs: Vec<u64>) -> Result<Self, GeometryError> {
        let total: u64 = runs.iter().sum();
        let expected = u64::from(width) * u64::from(height);
        if total != expected {
            return Err(GeometryError::MaskSizeMismatch {
                got: total,
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            runs,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u64] {
        &self.runs
    }

    /// Tightest box covering every set pixel, taking the extreme left, top,
    /// right, and bottom pixel coordinates; `None` when no pixel is set.
    ///
    /// A set pixel at column `c`, row `r` contributes the extent
    /// `[c, r, c+1, r+1]`.
    pub fn to_bbox(&self) -> Option<BBox> {
        if self.width == 0 || self.height == 0 {
            return None;
        }
        let w = u64::from(self.width);
        let mut min_col = u64::MAX;
        let mut max_col = 0u64;
        let mut min_row = u64::MAX;
        let mut max_row = 0u64;
        let mut any = false;

        // Runs alternate zeros/ones starting with zeros; odd indices are ones.
        let mut pos = 0u64;
        for (i, &len) in self.runs.iter().enumerate() {
            if i % 2 == 1 && len > 0 {
                any = true;
                let start = pos;
                let end = pos + len - 1; // inclusive last set pixel
                min_row = min_row.min(start / w);
                max_row = max_row.max(end / w);
                if end / w > start / w {
                    // The run crosses a row boundary, so it covers the tail
                    // of one row and the head of the next: all columns hit.
                    min_col = 0;
                    max_col = w - 1;
                } else {
                    min_col = min_col.min(start % w);
                    max_col = max_col.max(end % w);
                }
            }
            pos += len;
        }

        if !any {
            return None;
        }
        Some(
            BBox::new(
                min_col as f64,
                min_row as f64,
                (max_col + 1) as f64,
                (max_row + 1) as f64,
            )
            .expect("mask extremes are ordered"),
        )
    }
}
