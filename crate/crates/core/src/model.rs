//! Canonical domain types and the geometric primitives shared by every stage.
//!
//! Boxes are stored in pixel space. The integer `[0, 1000]` grid used in
//! conversation text only appears at serialization and parsing boundaries
//! (see [`normalize_box`] and [`denormalize_box`]).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound of the normalized coordinate grid (inclusive).
pub const NORM_RANGE: u16 = 1000;

/// Slack allowed when a pixel box pokes past the image border.
pub const CLAMP_TOLERANCE_PX: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid bounding box {0}")]
    InvalidBox(String),
    #[error("normalized coordinate {0} exceeds {NORM_RANGE}")]
    NormOutOfRange(u32),
    #[error("normalized box {0} has inverted corners")]
    NormInverted(String),
    #[error("box {bbox} lies outside the {width}x{height} image")]
    OutOfBounds { bbox: String, width: u32, height: u32 },
    #[error("image dimensions must be positive, got {width}x{height}")]
    BadDimensions { width: u32, height: u32 },
    #[error("{0}")]
    Invariant(String),
}

/// Axis-aligned pixel-space box, origin at the top-left of the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BoundingBox {
    /// Builds a box and checks the strict invariants (positive area, finite, non-negative).
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, ModelError> {
        let b = Self { xmin, ymin, xmax, ymax };
        b.validate()?;
        Ok(b)
    }

    /// Builds from COCO/MOT style `x, y, w, h`.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, ModelError> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(ModelError::InvalidBox(self.to_string()))
        }
    }

    pub fn is_valid(&self) -> bool {
        let c = [self.xmin, self.ymin, self.xmax, self.ymax];
        c.iter().all(|v| v.is_finite() && *v >= 0.0) && self.xmin < self.xmax && self.ymin < self.ymax
    }

    /// Zero-area but otherwise well-ordered box, as produced by denormalizing a degenerate [`NormBox`].
    pub fn is_degenerate(&self) -> bool {
        let c = [self.xmin, self.ymin, self.xmax, self.ymax];
        c.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.xmin <= self.xmax
            && self.ymin <= self.ymax
            && (self.xmin == self.xmax || self.ymin == self.ymax)
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)
    }

    /// Intersects with the image rectangle. Returns `None` when nothing of
    /// positive area remains.
    pub fn clip_to(&self, width: u32, height: u32) -> Option<Self> {
        let (w, h) = (f64::from(width), f64::from(height));
        let b = Self {
            xmin: self.xmin.clamp(0.0, w),
            ymin: self.ymin.clamp(0.0, h),
            xmax: self.xmax.clamp(0.0, w),
            ymax: self.ymax.clamp(0.0, h),
        };
        b.is_valid().then_some(b)
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.xmin, self.ymin, self.xmax, self.ymax)
    }
}

/// Box on the integer `[0, 1000]` grid used inside conversation text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NormBox {
    xmin: u16,
    ymin: u16,
    xmax: u16,
    ymax: u16,
}

impl NormBox {
    pub fn new(xmin: u16, ymin: u16, xmax: u16, ymax: u16) -> Result<Self, ModelError> {
        for v in [xmin, ymin, xmax, ymax] {
            if v > NORM_RANGE {
                return Err(ModelError::NormOutOfRange(u32::from(v)));
            }
        }
        let nb = Self { xmin, ymin, xmax, ymax };
        if xmin > xmax || ymin > ymax {
            return Err(ModelError::NormInverted(nb.to_string()));
        }
        Ok(nb)
    }

    pub fn xmin(&self) -> u16 {
        self.xmin
    }
    pub fn ymin(&self) -> u16 {
        self.ymin
    }
    pub fn xmax(&self) -> u16 {
        self.xmax
    }
    pub fn ymax(&self) -> u16 {
        self.ymax
    }

    pub fn coords(&self) -> [u16; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    /// Zero width or zero height on the grid.
    pub fn is_degenerate(&self) -> bool {
        self.xmin == self.xmax || self.ymin == self.ymax
    }
}

impl fmt::Display for NormBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{}]", self.xmin, self.ymin, self.xmax, self.ymax)
    }
}

/// Reference to one frame of a clip or source sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRef {
    /// 1-based position within the owning clip or sequence.
    pub index: u32,
    /// Frame number in the original source numbering.
    pub source_frame_id: u64,
    pub image_path: String,
    pub width: u32,
    pub height: u32,
}

impl FrameRef {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.index == 0 {
            return Err(ModelError::Invariant(format!("frame {} has index 0", self.image_path)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(ModelError::BadDimensions { width: self.width, height: self.height });
        }
        Ok(())
    }
}

/// One subject followed across the frames of a sequence or clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub id: u32,
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appearance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    /// Frame index to box; `BTreeMap` keeps indices strictly increasing.
    pub boxes: BTreeMap<u32, BoundingBox>,
}

impl Tracklet {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id == 0 {
            return Err(ModelError::Invariant("tracklet id must be positive".into()));
        }
        if self.category.trim().is_empty() {
            return Err(ModelError::Invariant(format!("tracklet {} has an empty category", self.id)));
        }
        if self.boxes.is_empty() {
            return Err(ModelError::Invariant(format!("tracklet {} has no boxes", self.id)));
        }
        if self.boxes.contains_key(&0) {
            return Err(ModelError::Invariant(format!("tracklet {} uses frame index 0", self.id)));
        }
        self.boxes.values().try_for_each(BoundingBox::validate)
    }

    pub fn first_frame(&self) -> Option<u32> {
        self.boxes.keys().next().copied()
    }
}

/// Short multi-frame window cut out of a source sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSample {
    pub frames: Vec<FrameRef>,
    pub tracklets: Vec<Tracklet>,
    pub source_dataset: String,
    /// Source-frame stride between consecutive clip frames; 1 for single-frame clips.
    pub gap: u32,
}

impl ClipSample {
    pub fn frame(&self, index: u32) -> Option<&FrameRef> {
        self.frames.iter().find(|f| f.index == index)
    }

    /// Checks the clip invariants against the sampler limits that produced it.
    pub fn validate(&self, max_frames: usize, gaps: &[u32]) -> Result<(), ModelError> {
        if self.frames.is_empty() || self.frames.len() > max_frames {
            return Err(ModelError::Invariant(format!(
                "clip has {} frames, expected 1..={max_frames}",
                self.frames.len()
            )));
        }
        for (i, f) in self.frames.iter().enumerate() {
            f.validate()?;
            if f.index as usize != i + 1 {
                return Err(ModelError::Invariant(format!("clip frame {} has index {}", i + 1, f.index)));
            }
        }
        if self.frames.len() > 1 && !gaps.contains(&self.gap) {
            return Err(ModelError::Invariant(format!("gap {} not in configured set", self.gap)));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tracklets {
            t.validate()?;
            if !seen.insert(t.id) {
                return Err(ModelError::Invariant(format!("duplicate tracklet id {}", t.id)));
            }
            if let Some(bad) = t.boxes.keys().find(|k| self.frame(**k).is_none()) {
                return Err(ModelError::Invariant(format!("tracklet {} references missing frame {bad}", t.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationKind {
    Location,
    Appearance,
    Action,
}

/// First-frame observation used to query a subject.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub kind: ObservationKind,
    pub text: String,
    pub subject_id: u32,
}

impl Observation {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self.kind {
            ObservationKind::Location => parse_norm_literal(&self.text)
                .map(|_| ())
                .ok_or_else(|| ModelError::Invariant(format!("location text {:?} is not a box literal", self.text))),
            _ if self.text.trim().is_empty() => Err(ModelError::Invariant("empty observation text".into())),
            _ => Ok(()),
        }
    }
}

/// Parses exactly `[a,b,c,d]` into a [`NormBox`].
pub(crate) fn parse_norm_literal(text: &str) -> Option<NormBox> {
    let inner = text.strip_prefix('[')?.strip_suffix(']')?;
    let parts: Vec<u16> = inner.split(',').map(|p| p.parse().ok()).collect::<Option<_>>()?;
    match parts[..] {
        [a, b, c, d] => NormBox::new(a, b, c, d).ok(),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Caption,
    Detection,
    Tracking,
    Referring,
    Reasoning,
    Fit,
}

impl Task {
    pub const ALL: [Task; 6] = [
        Task::Caption,
        Task::Detection,
        Task::Tracking,
        Task::Referring,
        Task::Reasoning,
        Task::Fit,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Caption => "caption",
            Task::Detection => "detection",
            Task::Tracking => "tracking",
            Task::Referring => "referring",
            Task::Reasoning => "reasoning",
            Task::Fit => "fit",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One question/answer pair with its frames and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub task: Task,
    /// Template variant that produced the record, e.g. `grounding` or `region_caption`.
    pub variant: String,
    pub frames: Vec<FrameRef>,
    pub question: String,
    pub answer: String,
    pub observation: Option<Observation>,
    pub future_text: Option<String>,
    pub is_negative: bool,
    pub seed_trace: u64,
}

impl ConversationRecord {
    /// `negative_answer` is the template refusal the record must carry when it is negative.
    pub fn validate(&self, negative_answer: Option<&str>) -> Result<(), ModelError> {
        if self.question.trim().is_empty() || self.answer.trim().is_empty() {
            return Err(ModelError::Invariant("question and answer must be nonempty".into()));
        }
        if self.task == Task::Fit && self.future_text.as_deref().is_none_or(|t| t.trim().is_empty()) {
            return Err(ModelError::Invariant("fit record without future text".into()));
        }
        if self.is_negative {
            match negative_answer {
                Some(neg) if neg == self.answer => {}
                Some(_) => return Err(ModelError::Invariant("negative record answer differs from template".into())),
                None => return Err(ModelError::Invariant(format!("task {} has no negative template", self.task))),
            }
        }
        if let Some(obs) = &self.observation {
            obs.validate()?;
        }
        self.frames.iter().try_for_each(FrameRef::validate)
    }
}

/// Named metric values, per-category breakdown and counters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub per_category: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MetricReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Intersection over union of two valid boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64, ModelError> {
    a.validate()?;
    b.validate()?;
    Ok(overlap_ratio(a, b))
}

/// IoU without validation; zero when the union is empty. Used where
/// predictions may legitimately be degenerate.
pub(crate) fn overlap_ratio(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.xmax.min(b.xmax) - a.xmin.max(b.xmin)).max(0.0);
    let ih = (a.ymax.min(b.ymax) - a.ymin.max(b.ymin)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

fn to_grid(v: f64, extent: f64) -> u16 {
    // f64::round is half away from zero.
    (v * f64::from(NORM_RANGE) / extent).round().clamp(0.0, f64::from(NORM_RANGE)) as u16
}

/// Maps a pixel box onto the `[0, 1000]` grid of a `width` x `height` image.
///
/// The result may be degenerate for sub-pixel objects; check
/// [`NormBox::is_degenerate`].
pub fn normalize_box(b: &BoundingBox, width: u32, height: u32) -> Result<NormBox, ModelError> {
    if width == 0 || height == 0 {
        return Err(ModelError::BadDimensions { width, height });
    }
    if !b.is_valid() && !b.is_degenerate() {
        return Err(ModelError::InvalidBox(b.to_string()));
    }
    let (w, h) = (f64::from(width), f64::from(height));
    let out_of_bounds = || ModelError::OutOfBounds { bbox: b.to_string(), width, height };
    if b.xmin >= w || b.ymin >= h {
        return Err(out_of_bounds());
    }
    if b.xmax > w + CLAMP_TOLERANCE_PX || b.ymax > h + CLAMP_TOLERANCE_PX {
        return Err(out_of_bounds());
    }
    NormBox::new(
        to_grid(b.xmin.min(w), w),
        to_grid(b.ymin.min(h), h),
        to_grid(b.xmax.min(w), w),
        to_grid(b.ymax.min(h), h),
    )
}

/// Inverse affine map of [`normalize_box`]. Degenerate grid boxes yield
/// zero-area pixel boxes ([`BoundingBox::is_degenerate`]).
pub fn denormalize_box(nb: &NormBox, width: u32, height: u32) -> Result<BoundingBox, ModelError> {
    if width == 0 || height == 0 {
        return Err(ModelError::BadDimensions { width, height });
    }
    let (w, h) = (f64::from(width), f64::from(height));
    let scale = f64::from(NORM_RANGE);
    Ok(BoundingBox {
        xmin: f64::from(nb.xmin) * w / scale,
        ymin: f64::from(nb.ymin) * h / scale,
        xmax: f64::from(nb.xmax) * w / scale,
        ymax: f64::from(nb.ymax) * h / scale,
    })
}
