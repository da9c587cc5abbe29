//! Adapters from public annotation layouts into canonical sequences.
//!
//! Supported inputs:
//! - COCO-style detection/caption JSON (`images`, `annotations`, `categories`)
//! - MOTChallenge `gt.txt` plus a `seqinfo.ini` sidecar
//! - single-object `groundtruth.txt` (one `x,y,w,h` per frame) plus an image directory
//! - referring / pre-converted reasoning JSONL
//! - an optional per-track attributes JSON (`{"<track id>": {"action": ..}}`)
//!   that adds appearance/action text to the tracklets of a sequence
//!
//! Every adapter returns [`IngestStats`] alongside its output. Rows that are
//! not turned into boxes are counted under a drop reason, and
//! [`IngestStats::check_conservation`] asserts that nothing went missing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundingBox, FrameRef, ModelError, Tracklet};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed document at byte {offset}: {message}")]
    Malformed { path: PathBuf, offset: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
    #[error("{path}: annotation references unknown category id {id}")]
    UnknownCategory { path: PathBuf, id: u64 },
    #[error("{path}: annotation references unknown image id {id}")]
    UnknownImage { path: PathBuf, id: u64 },
    #[error("{path}: {lines} annotation lines but {frames} frames")]
    FrameCountMismatch { path: PathBuf, lines: usize, frames: usize },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

/// Reasons an input row does not become an output box or record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// MOT consider flag 0.
    Ignored,
    /// Zero-area box.
    Degenerate,
    /// No overlap with the image after clipping.
    OutsideImage,
    /// Image entry lacks width/height.
    MissingDimensions,
    /// COCO `iscrowd` region.
    Crowd,
    /// SOT frame with the all-zero or NaN sentinel.
    Absent,
    EmptyExpression,
    MissingTarget,
    BadFrame,
    InvalidBox,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::Ignored => "ignored",
            DropReason::Degenerate => "degenerate",
            DropReason::OutsideImage => "outside_image",
            DropReason::MissingDimensions => "missing_dimensions",
            DropReason::Crowd => "crowd",
            DropReason::Absent => "absent",
            DropReason::EmptyExpression => "empty_expression",
            DropReason::MissingTarget => "missing_target",
            DropReason::BadFrame => "bad_frame",
            DropReason::InvalidBox => "invalid_box",
        }
    }
}

/// Per-file accounting. For box-producing adapters the unit is an annotation
/// row; for the referring adapter it is a JSONL record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    pub input_rows: u64,
    pub emitted: u64,
    pub dropped: BTreeMap<DropReason, u64>,
    /// Skipped images or records that carried no rows of their own.
    pub warnings: u64,
}

impl IngestStats {
    fn drop(&mut self, reason: DropReason) {
        *self.dropped.entry(reason).or_default() += 1;
    }

    pub fn dropped_total(&self) -> u64 {
        self.dropped.values().sum()
    }

    /// `input_rows == emitted + dropped`.
    pub fn check_conservation(&self) -> bool {
        self.input_rows == self.emitted + self.dropped_total()
    }

    pub fn merge(&mut self, other: &IngestStats) {
        self.input_rows += other.input_rows;
        self.emitted += other.emitted;
        self.warnings += other.warnings;
        for (k, v) in &other.dropped {
            *self.dropped.entry(*k).or_default() += v;
        }
    }
}

/// A full source sequence (or single image) in canonical form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSequence {
    pub dataset: String,
    pub name: String,
    pub frames: Vec<FrameRef>,
    pub tracklets: Vec<Tracklet>,
    /// Captions attached to the image of a single-frame sequence.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub captions: Vec<String>,
}

impl SourceSequence {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (i, f) in self.frames.iter().enumerate() {
            f.validate()?;
            if f.index as usize != i + 1 {
                return Err(ModelError::Invariant(format!(
                    "{}: frame {} has index {}, expected contiguous indices",
                    self.name,
                    i + 1,
                    f.index
                )));
            }
        }
        let n = self.frames.len() as u32;
        let mut ids = BTreeSet::new();
        for t in &self.tracklets {
            t.validate()?;
            if !ids.insert(t.id) {
                return Err(ModelError::Invariant(format!("{}: duplicate tracklet id {}", self.name, t.id)));
            }
            if let Some(k) = t.boxes.keys().find(|k| **k > n) {
                return Err(ModelError::Invariant(format!("{}: tracklet {} uses frame {k} > {n}", self.name, t.id)));
            }
        }
        Ok(())
    }

    pub fn box_count(&self) -> u64 {
        self.tracklets.iter().map(|t| t.boxes.len() as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferringTarget {
    Box { bbox: BoundingBox },
    Track { tracklet: Tracklet },
}

/// Expression paired with the box or trajectory it describes.
///
/// When `answer` is present the record is a pre-converted reasoning pair:
/// `expression` holds the question and `answer` the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferringRecord {
    pub dataset: String,
    pub frames: Vec<FrameRef>,
    pub expression: String,
    pub category: String,
    pub target: ReferringTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

impl ReferringRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.expression.trim().is_empty() {
            return Err(ModelError::Invariant("empty referring expression".into()));
        }
        self.frames.iter().try_for_each(FrameRef::validate)?;
        match &self.target {
            ReferringTarget::Box { bbox } => bbox.validate(),
            ReferringTarget::Track { tracklet } => tracklet.validate(),
        }
    }

    /// The target as a tracklet (id 1), whatever its stored shape.
    pub fn target_tracklet(&self) -> Tracklet {
        match &self.target {
            ReferringTarget::Track { tracklet } => tracklet.clone(),
            ReferringTarget::Box { bbox } => Tracklet {
                id: 1,
                category: self.category.clone(),
                appearance: None,
                action: None,
                boxes: BTreeMap::from([(1, *bbox)]),
            },
        }
    }
}

/// One line of the canonical store: `{"sequence": {..}}` or `{"referring": {..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalItem {
    Sequence(SourceSequence),
    Referring(ReferringRecord),
}

/// Clips a raw box to the image, recording the drop reason when it does not survive.
fn admit_box(raw: BoundingBox, width: u32, height: u32, stats: &mut IngestStats) -> Option<BoundingBox> {
    if !(raw.width() > 0.0 && raw.height() > 0.0) {
        stats.drop(DropReason::Degenerate);
        return None;
    }
    match raw.clip_to(width, height) {
        Some(b) => {
            stats.emitted += 1;
            Some(b)
        }
        None => {
            stats.drop(DropReason::OutsideImage);
            None
        }
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

#[derive(Deserialize)]
struct CocoDoc {
    images: Vec<CocoImage>,
    #[serde(default)]
    annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    categories: Vec<CocoCategory>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: Option<u32>,
    height: Option<u32>,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    #[serde(default)]
    id: Option<u64>,
    image_id: u64,
    #[serde(default)]
    category_id: Option<u64>,
    #[serde(default)]
    bbox: Option<[f64; 4]>,
    #[serde(default)]
    caption: Option<String>,
    #[serde(default)]
    iscrowd: u8,
}

#[derive(Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

/// Reads a COCO-style file; one single-frame sequence per image, ordered by image id.
pub fn ingest_coco_detection(path: &Path, dataset: &str) -> Result<(Vec<SourceSequence>, IngestStats), IngestError> {
    let text = read(path)?;
    parse_coco(&text, path, dataset)
}

pub fn parse_coco(text: &str, path: &Path, dataset: &str) -> Result<(Vec<SourceSequence>, IngestStats), IngestError> {
    let doc: CocoDoc = serde_json::from_str(text).map_err(|e| IngestError::Malformed {
        path: path.to_path_buf(),
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let categories: HashMap<u64, &str> = doc.categories.iter().map(|c| (c.id, c.name.as_str())).collect();
    let images: BTreeMap<u64, &CocoImage> = doc.images.iter().map(|im| (im.id, im)).collect();

    let mut per_image: BTreeMap<u64, Vec<&CocoAnnotation>> = BTreeMap::new();
    for ann in &doc.annotations {
        if !images.contains_key(&ann.image_id) {
            return Err(IngestError::UnknownImage { path: path.to_path_buf(), id: ann.image_id });
        }
        if ann.bbox.is_some() {
            let cid = ann.category_id.unwrap_or(0);
            if !categories.contains_key(&cid) {
                return Err(IngestError::UnknownCategory { path: path.to_path_buf(), id: cid });
            }
        }
        per_image.entry(ann.image_id).or_default().push(ann);
    }

    let mut stats = IngestStats::default();
    let mut out = Vec::with_capacity(images.len());
    for (image_id, image) in images {
        let mut anns = per_image.remove(&image_id).unwrap_or_default();
        // stable: annotations without ids keep file order
        anns.sort_by_key(|a| a.id.unwrap_or(u64::MAX));
        let box_rows = anns.iter().filter(|a| a.bbox.is_some()).count() as u64;
        stats.input_rows += box_rows;

        let (width, height) = match (image.width, image.height) {
            (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
            _ => {
                stats.warnings += 1;
                for _ in 0..box_rows {
                    stats.drop(DropReason::MissingDimensions);
                }
                continue;
            }
        };

        let mut tracklets = Vec::new();
        let mut captions = Vec::new();
        for ann in anns {
            if let Some(c) = ann.caption.as_deref().map(str::trim).filter(|c| !c.is_empty()) {
                captions.push(c.to_string());
            }
            let Some([x, y, w, h]) = ann.bbox else { continue };
            if ann.iscrowd != 0 {
                stats.drop(DropReason::Crowd);
                continue;
            }
            let raw = BoundingBox { xmin: x, ymin: y, xmax: x + w, ymax: y + h };
            if let Some(b) = admit_box(raw, width, height, &mut stats) {
                tracklets.push(Tracklet {
                    id: tracklets.len() as u32 + 1,
                    category: categories[&ann.category_id.unwrap_or(0)].to_string(),
                    appearance: None,
                    action: None,
                    boxes: BTreeMap::from([(1, b)]),
                });
            }
        }
        out.push(SourceSequence {
            dataset: dataset.to_string(),
            name: image.file_name.clone(),
            frames: vec![FrameRef {
                index: 1,
                source_frame_id: image_id,
                image_path: image.file_name.clone(),
                width,
                height,
            }],
            tracklets,
            captions,
        });
    }
    Ok((out, stats))
}

/// Contents of a MOTChallenge `seqinfo.ini`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqInfo {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub length: u32,
    pub image_root: PathBuf,
    pub image_ext: String,
}

impl SeqInfo {
    /// Parses `key=value` lines; `[section]` headers and `;`/`#` comments are ignored.
    /// `image_root` is `base/imDir`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut kv = HashMap::new();
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('[') || line.starts_with(';') || line.starts_with('#') {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                kv.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
            }
        }
        let num = |key: &str| -> Result<u32, String> {
            kv.get(key)
                .ok_or(format!("missing {key}"))?
                .parse::<u32>()
                .map_err(|e| format!("{key}: {e}"))
                .and_then(|v| if v == 0 { Err(format!("{key} must be positive")) } else { Ok(v) })
        };
        Ok(Self {
            name: kv.get("name").cloned().unwrap_or_default(),
            width: num("imwidth")?,
            height: num("imheight")?,
            length: num("seqlength")?,
            image_root: base.join(kv.get("imdir").map(String::as_str).unwrap_or("img1")),
            image_ext: kv.get("imext").cloned().unwrap_or_else(|| ".jpg".into()),
        })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|message| IngestError::Line { path: path.to_path_buf(), line: 0, message })
    }

    fn frame_path(&self, frame: u32) -> String {
        self.image_root.join(format!("{frame:06}{}", self.image_ext)).to_string_lossy().into_owned()
    }
}

/// MOT17 class ids; DanceTrack and SOMPT22 use class 1 throughout.
fn mot_class_name(class: i64) -> &'static str {
    match class {
        1 => "pedestrian",
        2 => "person on vehicle",
        3 => "car",
        4 => "bicycle",
        5 => "motorbike",
        6 => "non motorized vehicle",
        7 => "static person",
        8 => "distractor",
        9 => "occluder",
        10 => "occluder on the ground",
        11 => "occluder full",
        12 => "reflection",
        13 => "crowd",
        _ => "object",
    }
}

/// Reads MOTChallenge ground truth (`frame,id,x,y,w,h,flag,class,visibility`).
pub fn ingest_mot_challenge(
    gt_path: &Path,
    seqinfo: &SeqInfo,
    dataset: &str,
) -> Result<(SourceSequence, IngestStats), IngestError> {
    let text = read(gt_path)?;
    parse_mot(&text, gt_path, seqinfo, dataset)
}

pub fn parse_mot(
    text: &str,
    path: &Path,
    seqinfo: &SeqInfo,
    dataset: &str,
) -> Result<(SourceSequence, IngestStats), IngestError> {
    let line_err = |line: usize, message: String| IngestError::Line { path: path.to_path_buf(), line, message };
    let mut stats = IngestStats::default();
    let mut seen = BTreeSet::new();
    let mut tracks: BTreeMap<u32, Tracklet> = BTreeMap::new();

    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 6 {
            return Err(line_err(lineno, format!("expected at least 6 fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64, IngestError> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| line_err(lineno, format!("field {} is not numeric: {:?}", i + 1, fields[i])))
        };
        let int = |i: usize| -> Result<i64, IngestError> {
            let v = num(i)?;
            if v.fract() != 0.0 {
                return Err(line_err(lineno, format!("field {} is not an integer: {:?}", i + 1, fields[i])));
            }
            Ok(v as i64)
        };
        let frame = int(0)?;
        let id = int(1)?;
        let (x, y, w, h) = (num(2)?, num(3)?, num(4)?, num(5)?);
        let flag = if fields.len() > 6 { int(6)? } else { 1 };
        let class = if fields.len() > 7 { int(7)? } else { 1 };
        if fields.len() > 8 {
            num(8)?;
        }
        if frame < 1 || frame > i64::from(seqinfo.length) {
            return Err(line_err(lineno, format!("frame {frame} outside 1..={}", seqinfo.length)));
        }
        if id < 1 || id > i64::from(u32::MAX) {
            return Err(line_err(lineno, format!("track id {id} must be positive")));
        }
        let (frame, id) = (frame as u32, id as u32);
        if !seen.insert((frame, id)) {
            return Err(line_err(lineno, format!("duplicate row for frame {frame}, id {id}")));
        }
        stats.input_rows += 1;
        if flag == 0 {
            stats.drop(DropReason::Ignored);
            continue;
        }
        let raw = BoundingBox { xmin: x, ymin: y, xmax: x + w, ymax: y + h };
        if let Some(b) = admit_box(raw, seqinfo.width, seqinfo.height, &mut stats) {
            tracks
                .entry(id)
                .or_insert_with(|| Tracklet {
                    id,
                    category: mot_class_name(class).to_string(),
                    appearance: None,
                    action: None,
                    boxes: BTreeMap::new(),
                })
                .boxes
                .insert(frame, b);
        }
    }

    let frames = (1..=seqinfo.length)
        .map(|i| FrameRef {
            index: i,
            source_frame_id: u64::from(i),
            image_path: seqinfo.frame_path(i),
            width: seqinfo.width,
            height: seqinfo.height,
        })
        .collect();
    let name = if seqinfo.name.is_empty() {
        path.to_string_lossy().into_owned()
    } else {
        seqinfo.name.clone()
    };
    Ok((
        SourceSequence {
            dataset: dataset.to_string(),
            name,
            frames,
            tracklets: tracks.into_values().collect(),
            captions: Vec::new(),
        },
        stats,
    ))
}

/// Frame geometry and labelling for a single-object sequence, which has no sidecar of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct SotSequenceSpec {
    pub dataset: String,
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub category: String,
}

const IMAGE_EXTENSIONS: [&str; 5] = ["jpg", "jpeg", "png", "bmp", "webp"];

/// Sorted image files of a directory.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>, IngestError> {
    let io = |source| IngestError::Io { path: dir.to_path_buf(), source };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let p = entry.map_err(io)?.path();
        let is_image = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads a one-box-per-line ground truth for a single target (tracklet id 1).
pub fn ingest_sot_sequence(
    groundtruth_path: &Path,
    image_dir: &Path,
    spec: &SotSequenceSpec,
) -> Result<(SourceSequence, IngestStats), IngestError> {
    let text = read(groundtruth_path)?;
    let images: Vec<String> = list_images(image_dir)?
        .into_iter()
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    parse_sot(&text, groundtruth_path, &images, spec)
}

pub fn parse_sot(
    text: &str,
    path: &Path,
    images: &[String],
    spec: &SotSequenceSpec,
) -> Result<(SourceSequence, IngestStats), IngestError> {
    let rows: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    if rows.len() != images.len() {
        return Err(IngestError::FrameCountMismatch { path: path.to_path_buf(), lines: rows.len(), frames: images.len() });
    }
    if spec.width == 0 || spec.height == 0 {
        return Err(IngestError::Invalid {
            path: path.to_path_buf(),
            source: ModelError::BadDimensions { width: spec.width, height: spec.height },
        });
    }
    let mut stats = IngestStats::default();
    let mut boxes = BTreeMap::new();
    for (frame, (lineno, line)) in (1u32..).zip(rows) {
        let line_err = |message: String| IngestError::Line { path: path.to_path_buf(), line: lineno, message };
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| line_err(format!("not a number: {s:?}"))))
            .collect::<Result<_, _>>()?;
        let [x, y, w, h] = vals[..] else {
            return Err(line_err(format!("expected 4 values, found {}", vals.len())));
        };
        stats.input_rows += 1;
        if vals.iter().any(|v| v.is_nan()) || vals.iter().all(|v| *v == 0.0) {
            stats.drop(DropReason::Absent);
            continue;
        }
        if w < 0.0 || h < 0.0 || !vals.iter().all(|v| v.is_finite()) {
            return Err(line_err(format!("invalid box {line:?}")));
        }
        let raw = BoundingBox { xmin: x, ymin: y, xmax: x + w, ymax: y + h };
        if let Some(b) = admit_box(raw, spec.width, spec.height, &mut stats) {
            boxes.insert(frame, b);
        }
    }
    let frames = (1u32..)
        .zip(images)
        .map(|(i, p)| FrameRef {
            index: i,
            source_frame_id: u64::from(i),
            image_path: p.clone(),
            width: spec.width,
            height: spec.height,
        })
        .collect();
    let tracklets = if boxes.is_empty() {
        Vec::new()
    } else {
        vec![Tracklet { id: 1, category: spec.category.clone(), appearance: None, action: None, boxes }]
    };
    Ok((
        SourceSequence {
            dataset: spec.dataset.clone(),
            name: spec.name.clone(),
            frames,
            tracklets,
            captions: Vec::new(),
        },
        stats,
    ))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
struct ReferringLine {
    #[serde(default)]
    expression: Option<String>,
    width: u32,
    height: u32,
    image_path: OneOrMany,
    #[serde(default)]
    boxes: Option<BTreeMap<String, [f64; 4]>>,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    appearance: Option<String>,
    #[serde(default)]
    action: Option<String>,
    #[serde(default)]
    answer: Option<String>,
}

/// Reads referring JSONL. Boxes are pixel corners keyed by 1-based frame index.
pub fn ingest_referring(path: &Path, dataset: &str) -> Result<(Vec<ReferringRecord>, IngestStats), IngestError> {
    let text = read(path)?;
    parse_referring(&text, path, dataset)
}

pub fn parse_referring(
    text: &str,
    path: &Path,
    dataset: &str,
) -> Result<(Vec<ReferringRecord>, IngestStats), IngestError> {
    let mut stats = IngestStats::default();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() {
            continue;
        }
        let row: ReferringLine = serde_json::from_str(line).map_err(|e| IngestError::Line {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        stats.input_rows += 1;
        if row.width == 0 || row.height == 0 {
            return Err(IngestError::Line {
                path: path.to_path_buf(),
                line: lineno,
                message: "width and height must be positive".into(),
            });
        }
        let expression = row.expression.as_deref().map(str::trim).unwrap_or_default();
        if expression.is_empty() {
            stats.drop(DropReason::EmptyExpression);
            continue;
        }
        let Some(raw_boxes) = row.boxes.filter(|b| !b.is_empty()) else {
            stats.drop(DropReason::MissingTarget);
            continue;
        };
        let paths = match row.image_path {
            OneOrMany::One(p) => vec![p],
            OneOrMany::Many(v) => v,
        };
        let frames: Vec<FrameRef> = (1u32..)
            .zip(&paths)
            .map(|(i, p)| FrameRef {
                index: i,
                source_frame_id: u64::from(i),
                image_path: p.clone(),
                width: row.width,
                height: row.height,
            })
            .collect();
        let mut boxes = BTreeMap::new();
        let mut reason = None;
        for (key, [x0, y0, x1, y1]) in raw_boxes {
            let Some(idx) = key.parse::<u32>().ok().filter(|i| *i >= 1 && (*i as usize) <= frames.len()) else {
                reason = Some(DropReason::BadFrame);
                break;
            };
            match BoundingBox::new(x0, y0, x1, y1).ok().and_then(|b| b.clip_to(row.width, row.height)) {
                Some(b) => {
                    boxes.insert(idx, b);
                }
                None => {
                    reason = Some(DropReason::InvalidBox);
                    break;
                }
            }
        }
        if let Some(r) = reason {
            stats.drop(r);
            continue;
        }
        let category = row.category.filter(|c| !c.trim().is_empty()).unwrap_or_else(|| "target".into());
        let target = if frames.len() == 1 {
            ReferringTarget::Box { bbox: boxes[&1] }
        } else {
            ReferringTarget::Track {
                tracklet: Tracklet {
                    id: 1,
                    category: category.clone(),
                    appearance: row.appearance,
                    action: row.action,
                    boxes,
                },
            }
        };
        stats.emitted += 1;
        out.push(ReferringRecord {
            dataset: dataset.to_string(),
            frames,
            expression: expression.to_string(),
            category,
            target,
            answer: row.answer.filter(|a| !a.trim().is_empty()),
        });
    }
    Ok((out, stats))
}

/// Free-text labels for one source track.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackAttributes {
    #[serde(default)]
    pub appearance: Option<String>,
    #[serde(default)]
    pub action: Option<String>,
    #[serde(default)]
    pub category: Option<String>,
}

/// Reads an attributes file keyed by source track id.
pub fn load_track_attributes(path: &Path) -> Result<BTreeMap<u32, TrackAttributes>, IngestError> {
    let text = read(path)?;
    parse_track_attributes(&text, path)
}

pub fn parse_track_attributes(text: &str, path: &Path) -> Result<BTreeMap<u32, TrackAttributes>, IngestError> {
    let raw: BTreeMap<String, TrackAttributes> = serde_json::from_str(text).map_err(|e| IngestError::Malformed {
        path: path.to_path_buf(),
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    raw.into_iter()
        .map(|(k, v)| match k.trim().parse::<u32>() {
            Ok(id) if id > 0 => Ok((id, v)),
            _ => Err(IngestError::Malformed {
                path: path.to_path_buf(),
                offset: text.find(&format!("\"{k}\"")).unwrap_or(0),
                message: format!("track key {k:?} is not a positive id"),
            }),
        })
        .collect()
}

/// Sets appearance/action/category on matching tracklets; blank strings are
/// ignored. Returns the attribute keys that matched no tracklet.
pub fn apply_track_attributes(seq: &mut SourceSequence, attrs: &BTreeMap<u32, TrackAttributes>) -> Vec<u32> {
    let clean = |s: &Option<String>| s.as_deref().map(str::trim).filter(|t| !t.is_empty()).map(str::to_string);
    let mut unmatched = Vec::new();
    for (id, a) in attrs {
        let Some(t) = seq.tracklets.iter_mut().find(|t| t.id == *id) else {
            unmatched.push(*id);
            continue;
        };
        if let Some(v) = clean(&a.appearance) {
            t.appearance = Some(v);
        }
        if let Some(v) = clean(&a.action) {
            t.action = Some(v);
        }
        if let Some(v) = clean(&a.category) {
            t.category = v;
        }
    }
    unmatched
}
