//! Text grammar for boxes and trajectories inside conversation answers.
//!
//! ```text
//! norm_box     := "[" int "," int "," int "," int "]"        ints in [0,1000]
//! frame_entry  := "Frame" SP index ":" norm_box              index 1-based
//! id_block     := "<Id" n ">" frame_entry (";" frame_entry)* "</Id" n ">"
//! det_group    := category ":" norm_box ("," norm_box)*
//! det_answer   := det_group (";" det_group)*
//! traj_answer  := [category] id_block (id_block)*
//! frame_marker := "Frame" SP t ":" "<image>"
//! ```
//!
//! Strict parsing is byte-exact. Lenient parsing scans free-form model output
//! for blocks and groups, tolerating whitespace, and reports problems as
//! diagnostics instead of failing.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{normalize_box, FrameRef, ModelError, NormBox, Tracklet, NORM_RANGE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("nothing to serialize")]
    EmptyAnswer,
    #[error("category {0:?} is empty or contains a reserved delimiter")]
    BadCategory(String),
    #[error("tracklet {0} has no boxes")]
    EmptyTracklet(u32),
    #[error("tracklet {id} has a box on frame {frame}, which is not in the clip")]
    MissingFrame { id: u32, frame: u32 },
    #[error("clip has no frames")]
    NoFrames,
    #[error(transparent)]
    Normalize(#[from] ModelError),
    #[error("parse error at bytes {}..{}: {message}", span.start, span.end)]
    Parse { span: Range<usize>, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    Strict,
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub span: Range<usize>,
    pub message: String,
}

/// One `<Idn>` block recovered from text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTrack {
    pub id: u32,
    pub category: Option<String>,
    pub boxes: BTreeMap<u32, NormBox>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTrajectories {
    pub tracklets: Vec<ParsedTrack>,
    /// `category:[box]` groups, flattened in text order.
    pub detections: Vec<(String, NormBox)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl ParsedTrajectories {
    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn track(&self, id: u32) -> Option<&ParsedTrack> {
        self.tracklets.iter().find(|t| t.id == id)
    }
}

/// Serialized trajectory answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryText {
    pub text: String,
    pub frame_count: usize,
    /// Ids used in the text, always `1..=n`.
    pub ids: Vec<u32>,
    /// Original tracklet id behind each output id.
    pub source_ids: Vec<u32>,
}

const RESERVED: [char; 7] = [';', ':', '[', ']', '<', '>', '\n'];

fn check_category(cat: &str) -> Result<(), GrammarError> {
    if cat.trim().is_empty() || cat.trim() != cat || cat.contains(RESERVED) {
        Err(GrammarError::BadCategory(cat.to_string()))
    } else {
        Ok(())
    }
}

/// `cat1:[..],[..];cat2:[..]`, grouped by first appearance of each category and
/// ordered by `(ymin, xmin)` within a group.
pub fn serialize_detection<S: AsRef<str>>(objects: &[(S, NormBox)]) -> Result<String, GrammarError> {
    if objects.is_empty() {
        return Err(GrammarError::EmptyAnswer);
    }
    let mut groups: Vec<(&str, Vec<NormBox>)> = Vec::new();
    for (cat, nb) in objects {
        let cat = cat.as_ref();
        check_category(cat)?;
        match groups.iter_mut().find(|(c, _)| *c == cat) {
            Some((_, boxes)) => boxes.push(*nb),
            None => groups.push((cat, vec![*nb])),
        }
    }
    let parts: Vec<String> = groups
        .into_iter()
        .map(|(cat, mut boxes)| {
            boxes.sort_by_key(|b| (b.ymin(), b.xmin(), b.ymax(), b.xmax()));
            let joined: Vec<String> = boxes.iter().map(NormBox::to_string).collect();
            format!("{cat}:{}", joined.join(","))
        })
        .collect();
    Ok(parts.join(";"))
}

/// Renders tracklets as consecutive `<Idn>` blocks, renumbered `1..=n` by first
/// appearance (ties keep input order). Each block lists only the frames where
/// its subject appears.
pub fn serialize_trajectory(
    frames: &[FrameRef],
    tracklets: &[Tracklet],
    category: Option<&str>,
) -> Result<TrajectoryText, GrammarError> {
    if tracklets.is_empty() {
        return Err(GrammarError::EmptyAnswer);
    }
    if let Some(c) = category {
        check_category(c)?;
    }
    let mut order: Vec<(u32, &Tracklet)> = Vec::with_capacity(tracklets.len());
    for t in tracklets {
        let first = t.first_frame().ok_or(GrammarError::EmptyTracklet(t.id))?;
        order.push((first, t));
    }
    order.sort_by_key(|(first, _)| *first);

    let mut text = String::from(category.unwrap_or(""));
    let mut ids = Vec::with_capacity(order.len());
    let mut source_ids = Vec::with_capacity(order.len());
    for (n, (_, t)) in (1u32..).zip(order) {
        text.push_str(&format!("<Id{n}>"));
        for (i, (frame, b)) in t.boxes.iter().enumerate() {
            let f = frames
                .iter()
                .find(|f| f.index == *frame)
                .ok_or(GrammarError::MissingFrame { id: t.id, frame: *frame })?;
            let nb = normalize_box(b, f.width, f.height)?;
            if i > 0 {
                text.push(';');
            }
            text.push_str(&format!("Frame {frame}:{nb}"));
        }
        text.push_str(&format!("</Id{n}>"));
        ids.push(n);
        source_ids.push(t.id);
    }
    Ok(TrajectoryText { text, frame_count: frames.len(), ids, source_ids })
}

/// `Frame 1:<image> Frame 2:<image> ...`
pub fn render_frame_markers(frames: &[FrameRef]) -> Result<String, GrammarError> {
    if frames.is_empty() {
        return Err(GrammarError::NoFrames);
    }
    let markers: Vec<String> = (1..=frames.len()).map(|t| format!("Frame {t}:<image>")).collect();
    Ok(markers.join(" "))
}

/// Parses a model response. Strict mode returns `Err` on any grammar
/// violation; lenient mode always returns `Ok`, with problems listed in
/// `diagnostics` (mismatched Id tokens are reported with error severity).
pub fn parse_response(text: &str, mode: ParseMode) -> Result<ParsedTrajectories, GrammarError> {
    match mode {
        ParseMode::Strict => parse_strict(text),
        ParseMode::Lenient => Ok(parse_strict(text).unwrap_or_else(|_| parse_lenient(text))),
    }
}

/// Byte offset just past the last `</Idn>` token, i.e. the end of the trajectory prefix of an answer.
pub fn trajectory_prefix_len(text: &str) -> Option<usize> {
    let start = text.rfind("</Id")?;
    text[start..].find('>').map(|i| start + i + 1)
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    lenient: bool,
    diags: Vec<Diagnostic>,
}

type PResult<T> = Result<T, (Range<usize>, String)>;

impl<'a> Cursor<'a> {
    fn new(src: &'a str, pos: usize, lenient: bool) -> Self {
        Self { src, pos, lenient, diags: Vec::new() }
    }

    fn bytes(&self) -> &'a [u8] {
        self.src.as_bytes()
    }

    fn peek(&self) -> Option<u8> {
        self.bytes().get(self.pos).copied()
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn fail<T>(&self, message: impl Into<String>) -> PResult<T> {
        let end = (self.pos + 1).min(self.src.len()).max(self.pos);
        Err((self.pos..end, message.into()))
    }

    fn eat(&mut self, lit: &str) -> bool {
        if self.src[self.pos..].starts_with(lit) {
            self.pos += lit.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lit: &str) -> PResult<()> {
        if self.eat(lit) {
            Ok(())
        } else {
            self.fail(format!("expected {lit:?}"))
        }
    }

    fn skip_ws(&mut self) {
        if self.lenient {
            while self.peek().is_some_and(|b| b == b' ' || b == b'\t') {
                self.pos += 1;
            }
        }
    }

    fn warn(&mut self, span: Range<usize>, message: impl Into<String>) {
        self.diags.push(Diagnostic { severity: Severity::Warning, span, message: message.into() });
    }

    fn digits(&mut self) -> PResult<(u64, Range<usize>)> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return self.fail("expected an integer");
        }
        let span = start..self.pos;
        // saturate absurdly long numbers; they are clamped or rejected below
        let v = self.src[span.clone()].parse::<u64>().unwrap_or(u64::MAX);
        Ok((v, span))
    }

    fn coord(&mut self) -> PResult<u16> {
        self.skip_ws();
        let (v, span) = self.digits()?;
        self.skip_ws();
        if v > u64::from(NORM_RANGE) {
            if self.lenient {
                self.warn(span, format!("coordinate {v} clamped to {NORM_RANGE}"));
                return Ok(NORM_RANGE);
            }
            return Err((span, format!("coordinate {v} exceeds {NORM_RANGE}")));
        }
        Ok(v as u16)
    }

    fn norm_box(&mut self) -> PResult<NormBox> {
        let start = self.pos;
        self.expect("[")?;
        let mut c = [0u16; 4];
        for (i, slot) in c.iter_mut().enumerate() {
            if i > 0 {
                self.expect(",")?;
            }
            *slot = self.coord()?;
        }
        self.expect("]")?;
        let [x0, y0, x1, y1] = c;
        match NormBox::new(x0, y0, x1, y1) {
            Ok(nb) => Ok(nb),
            Err(_) if self.lenient => {
                self.warn(start..self.pos, "inverted box corners reordered");
                Ok(NormBox::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1)).expect("ordered"))
            }
            Err(e) => Err((start..self.pos, e.to_string())),
        }
    }

    fn frame_entry(&mut self) -> PResult<(u32, NormBox, Range<usize>)> {
        let start = self.pos;
        self.expect("Frame")?;
        if self.lenient {
            self.eat(" ");
        } else {
            self.expect(" ")?;
        }
        let (idx, span) = self.digits()?;
        if idx == 0 || idx > u64::from(u32::MAX) {
            return Err((span, format!("frame index {idx} out of range")));
        }
        self.expect(":")?;
        if self.lenient {
            self.eat(" ");
        }
        let nb = self.norm_box()?;
        Ok((idx as u32, nb, start..self.pos))
    }

    /// Frame entries up to (not including) the closing token.
    fn block_body(&mut self) -> PResult<BTreeMap<u32, NormBox>> {
        let mut boxes = BTreeMap::new();
        loop {
            let (idx, nb, span) = self.frame_entry()?;
            if let std::collections::btree_map::Entry::Vacant(e) = boxes.entry(idx) {
                e.insert(nb);
            } else {
                self.warn(span, format!("duplicate entry for frame {idx}; keeping the first"));
            }
            self.skip_ws();
            if !self.eat(";") {
                break;
            }
            self.skip_ws();
        }
        Ok(boxes)
    }

    fn id_token(&mut self, open: bool) -> PResult<u32> {
        self.expect(if open { "<Id" } else { "</Id" })?;
        let (n, span) = self.digits()?;
        if n == 0 || n > u64::from(u32::MAX) {
            return Err((span, "Id tokens are numbered from 1".into()));
        }
        self.expect(">")?;
        Ok(n as u32)
    }
}

fn parse_strict(text: &str) -> Result<ParsedTrajectories, GrammarError> {
    let perr = |(span, message): (Range<usize>, String)| GrammarError::Parse { span, message };
    let mut cur = Cursor::new(text, 0, false);
    let mut out = ParsedTrajectories::default();
    if text.is_empty() {
        return Err(perr((0..0, "empty response".into())));
    }
    if let Some(first) = text.find("<Id") {
        let prefix = &text[..first];
        let category = if prefix.is_empty() {
            None
        } else {
            check_category(prefix).map_err(|_| perr((0..first, format!("invalid category prefix {prefix:?}"))))?;
            Some(prefix.to_string())
        };
        cur.pos = first;
        while !cur.at_end() {
            let open_at = cur.pos;
            let id = cur.id_token(true).map_err(perr)?;
            let boxes = cur.block_body().map_err(perr)?;
            let close_at = cur.pos;
            let close = cur.id_token(false).map_err(perr)?;
            if close != id {
                return Err(perr((close_at..cur.pos, format!("<Id{id}> closed by </Id{close}>"))));
            }
            if out.track(id).is_some() {
                return Err(perr((open_at..cur.pos, format!("duplicate block for Id{id}"))));
            }
            out.tracklets.push(ParsedTrack { id, category: category.clone(), boxes });
        }
    } else {
        loop {
            let start = cur.pos;
            let colon = text[start..].find(':').map(|i| start + i).ok_or_else(|| perr((start..text.len(), "expected category:".into())))?;
            let cat = &text[start..colon];
            check_category(cat).map_err(|_| perr((start..colon, format!("invalid category {cat:?}"))))?;
            cur.pos = colon + 1;
            loop {
                let nb = cur.norm_box().map_err(perr)?;
                out.detections.push((cat.to_string(), nb));
                if !cur.eat(",") {
                    break;
                }
            }
            if cur.at_end() {
                break;
            }
            cur.expect(";").map_err(perr)?;
        }
    }
    out.diagnostics = cur.diags;
    Ok(out)
}

fn is_boundary(b: u8) -> bool {
    b.is_ascii_whitespace() || b";,.!?:>)(\"'".contains(&b)
}

fn parse_lenient(text: &str) -> ParsedTrajectories {
    let mut out = ParsedTrajectories::default();
    let mut claimed: Vec<Range<usize>> = Vec::new();
    let error = |span: Range<usize>, message: String| Diagnostic { severity: Severity::Error, span, message };
    let warning = |span: Range<usize>, message: String| Diagnostic { severity: Severity::Warning, span, message };

    let mut pos = 0;
    while let Some(rel) = text[pos..].find("<Id") {
        let open_at = pos + rel;
        let mut cur = Cursor::new(text, open_at, true);
        let Ok(id) = cur.id_token(true) else {
            out.diagnostics.push(warning(open_at..open_at + 3, "malformed Id token".into()));
            pos = open_at + 3;
            continue;
        };
        let header_end = cur.pos;
        let next_open = text[header_end..].find("<Id").map(|i| header_end + i);
        let close_at = text[header_end..].find("</Id").map(|i| header_end + i);
        let close_at = match (close_at, next_open) {
            (Some(c), Some(o)) if o < c => None,
            (c, _) => c,
        };
        let Some(close_at) = close_at else {
            out.diagnostics.push(error(open_at..header_end, format!("<Id{id}> is never closed")));
            pos = header_end;
            continue;
        };
        let mut close_cur = Cursor::new(text, close_at, true);
        let close = match close_cur.id_token(false) {
            Ok(c) => c,
            Err(_) => {
                out.diagnostics.push(error(open_at..close_at + 4, format!("<Id{id}> has a malformed closing token")));
                pos = close_at + 4;
                continue;
            }
        };
        let block_end = close_cur.pos;
        claimed.push(open_at..block_end);
        pos = block_end;
        if close != id {
            out.diagnostics.push(error(open_at..block_end, format!("<Id{id}> closed by </Id{close}>")));
            continue;
        }
        cur.skip_ws();
        let body = cur.block_body().and_then(|b| {
            cur.skip_ws();
            if cur.pos == close_at {
                Ok(b)
            } else {
                cur.fail("unexpected text inside block")
            }
        });
        out.diagnostics.append(&mut cur.diags);
        match body {
            Err((span, message)) => {
                out.diagnostics.push(warning(open_at..block_end, format!("block Id{id} skipped: {message} at byte {}", span.start)));
            }
            Ok(_) if out.track(id).is_some() => {
                out.diagnostics.push(warning(open_at..block_end, format!("duplicate block for Id{id} ignored")));
            }
            Ok(boxes) => {
                let bytes = text.as_bytes();
                let mut s = open_at;
                while s > 0 && !is_boundary(bytes[s - 1]) && bytes[s - 1] != b'<' {
                    s -= 1;
                }
                let category = (s < open_at).then(|| text[s..open_at].to_string());
                out.tracklets.push(ParsedTrack { id, category, boxes });
            }
        }
    }

    // detection groups in whatever is left
    let in_claimed = |i: usize| claimed.iter().any(|r| r.contains(&i));
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b':' || in_claimed(i) {
            i += 1;
            continue;
        }
        let mut cur = Cursor::new(text, i + 1, true);
        cur.skip_ws();
        if cur.peek() != Some(b'[') {
            i += 1;
            continue;
        }
        let mut s = i;
        while s > 0 && !b";\n.!?,".contains(&bytes[s - 1]) && !in_claimed(s - 1) && bytes[s - 1] != b'>' {
            s -= 1;
        }
        let cat = text[s..i].trim();
        let is_frame_label = cat
            .strip_prefix("Frame")
            .is_some_and(|rest| !rest.trim().is_empty() && rest.trim().bytes().all(|b| b.is_ascii_digit()));
        if cat.is_empty() || check_category(cat).is_err() || is_frame_label {
            i += 1;
            continue;
        }
        loop {
            let box_at = cur.pos;
            match cur.norm_box() {
                Ok(nb) => out.detections.push((cat.to_string(), nb)),
                Err((span, message)) => {
                    out.diagnostics.push(warning(box_at..span.end.max(box_at), format!("detection box skipped: {message}")));
                    break;
                }
            }
            let save = cur.pos;
            cur.skip_ws();
            if cur.eat(",") {
                cur.skip_ws();
                if cur.peek() == Some(b'[') {
                    continue;
                }
            }
            cur.pos = save;
            break;
        }
        out.diagnostics.append(&mut cur.diags);
        i = cur.pos.max(i + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;

    fn nb(a: u16, b: u16, c: u16, d: u16) -> NormBox {
        NormBox::new(a, b, c, d).unwrap()
    }

    fn frames(n: u32) -> Vec<FrameRef> {
        (1..=n)
            .map(|i| FrameRef { index: i, source_frame_id: u64::from(i), image_path: format!("{i}.jpg"), width: 1000, height: 1000 })
            .collect()
    }

    fn track(id: u32, frames: &[u32]) -> Tracklet {
        Tracklet {
            id,
            category: "player".into(),
            appearance: None,
            action: None,
            boxes: frames
                .iter()
                .map(|f| (*f, BoundingBox::new(f64::from(*f), 10.0, 50.0 + f64::from(*f), 90.0).unwrap()))
                .collect(),
        }
    }

    #[test]
    fn detection_examples() {
        assert_eq!(serialize_detection(&[("cat", nb(1, 2, 3, 4))]).unwrap(), "cat:[1,2,3,4]");
        let s = serialize_detection(&[("a", nb(20, 20, 30, 30)), ("b", nb(5, 5, 6, 6)), ("a", nb(0, 0, 10, 10))]).unwrap();
        assert_eq!(s, "a:[0,0,10,10],[20,20,30,30];b:[5,5,6,6]");
        assert!(matches!(serialize_detection(&[("a;b", nb(0, 0, 1, 1))]), Err(GrammarError::BadCategory(_))));
        assert_eq!(serialize_detection::<&str>(&[]), Err(GrammarError::EmptyAnswer));
    }

    #[test]
    fn trajectory_examples() {
        let t = serialize_trajectory(&frames(3), &[track(7, &[1, 2, 3])], None).unwrap();
        assert_eq!(t.text, "<Id1>Frame 1:[1,10,51,90];Frame 2:[2,10,52,90];Frame 3:[3,10,53,90]</Id1>");
        assert_eq!(t.ids, vec![1]);
        assert_eq!(t.source_ids, vec![7]);

        let t = serialize_trajectory(&frames(3), &[track(4, &[2, 3]), track(9, &[1, 2, 3])], Some("player")).unwrap();
        assert!(t.text.starts_with("player<Id1>Frame 1:"));
        assert!(t.text.ends_with("<Id2>Frame 2:[2,10,52,90];Frame 3:[3,10,53,90]</Id2>"));
        assert_eq!(t.source_ids, vec![9, 4]);

        let a = serialize_trajectory(&frames(3), &[track(1, &[1])], None).unwrap();
        let b = serialize_trajectory(&frames(3), &[track(1, &[1])], None).unwrap();
        assert_eq!(a, b);

        let empty = Tracklet { boxes: BTreeMap::new(), ..track(1, &[1]) };
        assert_eq!(serialize_trajectory(&frames(3), &[empty], None), Err(GrammarError::EmptyTracklet(1)));
        assert!(matches!(
            serialize_trajectory(&frames(2), &[track(1, &[3])], None),
            Err(GrammarError::MissingFrame { frame: 3, .. })
        ));
    }

    #[test]
    fn frame_markers() {
        assert_eq!(render_frame_markers(&frames(1)).unwrap(), "Frame 1:<image>");
        assert_eq!(render_frame_markers(&frames(3)).unwrap(), "Frame 1:<image> Frame 2:<image> Frame 3:<image>");
        assert_eq!(render_frame_markers(&[]), Err(GrammarError::NoFrames));
    }

    #[test]
    fn strict_round_trip() {
        let t = serialize_trajectory(&frames(3), &[track(4, &[2, 3]), track(9, &[1, 2, 3])], Some("player")).unwrap();
        let p = parse_response(&t.text, ParseMode::Strict).unwrap();
        assert_eq!(p.tracklets.len(), 2);
        assert_eq!(p.tracklets[1].boxes[&2], nb(2, 10, 52, 90));
        assert_eq!(p.tracklets[0].category.as_deref(), Some("player"));
        let d = parse_response("a:[0,0,10,10],[20,20,30,30];b:[5,5,6,6]", ParseMode::Strict).unwrap();
        assert_eq!(d.detections.len(), 3);
        assert_eq!(d.detections[2], ("b".to_string(), nb(5, 5, 6, 6)));
    }

    #[test]
    fn lenient_scans_prose() {
        let p = parse_response("Sure! The player is at <Id1>Frame 1:[10,10,50,90]</Id1>.", ParseMode::Lenient).unwrap();
        assert_eq!(p.tracklets.len(), 1);
        assert_eq!(p.tracklets[0].boxes[&1], nb(10, 10, 50, 90));
        assert!(!p.has_errors());
        assert!(parse_response("Sure! <Id1>Frame 1:[10,10,50,90]</Id1>", ParseMode::Strict).is_err());
    }

    #[test]
    fn arity_violation() {
        let text = "<Id1>Frame 1:[10,10,50]</Id1>";
        assert!(matches!(parse_response(text, ParseMode::Strict), Err(GrammarError::Parse { .. })));
        let p = parse_response(text, ParseMode::Lenient).unwrap();
        assert!(p.tracklets.is_empty());
        assert!(!p.has_errors());
        assert_eq!(p.diagnostics.len(), 1);
        assert_eq!(p.diagnostics[0].severity, Severity::Warning);
    }

    #[test]
    fn mismatched_ids_error_in_both_modes() {
        let text = "<Id1>Frame 1:[1,1,2,2]</Id2>";
        assert!(parse_response(text, ParseMode::Strict).is_err());
        let p = parse_response(text, ParseMode::Lenient).unwrap();
        assert!(p.has_errors());
        let unclosed = parse_response("<Id1>Frame 1:[1,1,2,2] <Id2>Frame 1:[1,1,2,2]</Id2>", ParseMode::Lenient).unwrap();
        assert!(unclosed.has_errors());
        assert_eq!(unclosed.tracklets.len(), 1);
        assert_eq!(unclosed.tracklets[0].id, 2);
    }

    #[test]
    fn lenient_whitespace_clamp_and_duplicates() {
        let p = parse_response("<Id1>Frame1: [10, 10, 1200, 90]; Frame 1:[0,0,1,1];Frame 2:[5,5,6,6]</Id1>", ParseMode::Lenient)
            .unwrap();
        let t = &p.tracklets[0];
        assert_eq!(t.boxes[&1], nb(10, 10, 1000, 90));
        assert_eq!(t.boxes.len(), 2);
        assert_eq!(p.diagnostics.iter().filter(|d| d.severity == Severity::Warning).count(), 2);
        // strict is byte exact
        assert!(parse_response("<Id1>Frame 1: [10,10,20,90]</Id1>", ParseMode::Strict).is_err());
        assert!(parse_response("<Id1>Frame 1:[10,10,2000,90]</Id1>", ParseMode::Strict).is_err());
    }

    #[test]
    fn lenient_detections_in_prose() {
        let p = parse_response("I can see dog:[1,2,3,4], [5,6,7,8]; and a cat: [0,0,9,9].", ParseMode::Lenient).unwrap();
        let cats: Vec<&str> = p.detections.iter().map(|(c, _)| c.as_str()).collect();
        assert_eq!(cats, vec!["I can see dog", "I can see dog", "and a cat"]);
        assert_eq!(p.detections[1].1, nb(5, 6, 7, 8));
    }

    #[test]
    fn prefix_len() {
        let a = "<Id1>Frame 1:[1,1,2,2]</Id1><Id2>Frame 1:[1,1,2,2]</Id2> They will collide.";
        let n = trajectory_prefix_len(a).unwrap();
        assert_eq!(&a[n..], " They will collide.");
        assert_eq!(trajectory_prefix_len("no blocks"), None);
    }

    #[test]
    fn lenient_handles_unicode_and_junk() {
        for s in ["", "<", "<Id", "<Id1", "<Id1>", "</Id1>", "é<Id1>Frame 1:[1,1,2,2]</Id1>", "::[[", "x:[1,2", "ü:[1,2,3,4]"] {
            let _ = parse_response(s, ParseMode::Lenient).unwrap();
        }
        let p = parse_response("é<Id1>Frame 1:[1,1,2,2]</Id1>", ParseMode::Lenient).unwrap();
        assert_eq!(p.tracklets[0].category.as_deref(), Some("é"));
    }
}
