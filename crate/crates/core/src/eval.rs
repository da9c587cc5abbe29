//! Scoring: single-object tracking overlap/precision metrics, multiple-choice
//! accuracy, and yes/no hallucination polling.
//!
//! All values are in `[0, 1]`; presentation scaling belongs to the caller.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{denormalize_box, overlap_ratio, BoundingBox, MetricReport};
use crate::trajgrammar::{parse_response, Diagnostic, ParseMode};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction for unknown sequence {0:?}")]
    UnknownSequence(String),
    #[error("duplicate entry for {0:?}")]
    Duplicate(String),
    #[error("ground truth is empty: {0}")]
    EmptyGroundTruth(String),
    #[error("no records to evaluate")]
    NoRecords,
    #[error("prediction for {sequence:?} uses frame {frame} outside 1..={frame_count}")]
    FrameOutOfRange { sequence: String, frame: u32, frame_count: u32 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Success curve thresholds: 0.00, 0.02, ..., 1.00.
pub const SUCCESS_THRESHOLDS: usize = 51;
/// Normalized precision thresholds: 0.00, 0.01, ..., 0.50.
pub const NORM_PRECISION_THRESHOLDS: usize = 51;
pub const PRECISION_PIXELS: f64 = 20.0;

pub fn success_threshold(i: usize) -> f64 {
    i as f64 / 50.0
}

pub fn norm_precision_threshold(i: usize) -> f64 {
    i as f64 / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SotPrediction {
    pub sequence_id: String,
    pub boxes: BTreeMap<u32, BoundingBox>,
}

/// Ground-truth target of one sequence, pixel space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SotGroundTruth {
    pub sequence_id: String,
    pub width: u32,
    pub height: u32,
    pub frame_count: u32,
    #[serde(default)]
    pub category: Option<String>,
    pub boxes: BTreeMap<u32, BoundingBox>,
}

/// Per-frame statistics for one sequence under a prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameScores {
    pub ious: Vec<f64>,
    /// Center distance in pixels; `None` when the frame has no prediction.
    pub center_errors: Vec<Option<f64>>,
    /// Center distance after dividing each axis by the ground-truth box size.
    pub norm_center_errors: Vec<Option<f64>>,
}

pub fn score_frames(gt: &SotGroundTruth, pred: Option<&SotPrediction>) -> FrameScores {
    let mut s = FrameScores { ious: Vec::new(), center_errors: Vec::new(), norm_center_errors: Vec::new() };
    for (frame, g) in &gt.boxes {
        match pred.and_then(|p| p.boxes.get(frame)) {
            Some(p) => {
                let (gx, gy) = g.center();
                let (px, py) = p.center();
                let (dx, dy) = (px - gx, py - gy);
                s.ious.push(overlap_ratio(g, p));
                s.center_errors.push(Some(dx.hypot(dy)));
                s.norm_center_errors.push(Some((dx / g.width()).hypot(dy / g.height())));
            }
            None => {
                s.ious.push(0.0);
                s.center_errors.push(None);
                s.norm_center_errors.push(None);
            }
        }
    }
    s
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn fraction<T>(items: &[T], pred: impl Fn(&T) -> bool) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    items.iter().filter(|v| pred(v)).count() as f64 / items.len() as f64
}

/// Aggregate metrics of one sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceMetrics {
    pub ao: f64,
    pub sr50: f64,
    pub sr75: f64,
    pub success: f64,
    pub precision: f64,
    pub norm_precision: f64,
}

pub fn success_rate(ious: &[f64], threshold: f64) -> f64 {
    fraction(ious, |v| *v > threshold)
}

impl SequenceMetrics {
    pub fn from_scores(s: &FrameScores) -> Self {
        let within = |errs: &[Option<f64>], t: f64| fraction(errs, |e| e.is_some_and(|e| e <= t));
        Self {
            ao: mean(s.ious.iter().copied()),
            sr50: success_rate(&s.ious, 0.5),
            sr75: success_rate(&s.ious, 0.75),
            success: mean((0..SUCCESS_THRESHOLDS).map(|i| success_rate(&s.ious, success_threshold(i)))),
            precision: within(&s.center_errors, PRECISION_PIXELS),
            norm_precision: mean(
                (0..NORM_PRECISION_THRESHOLDS).map(|i| within(&s.norm_center_errors, norm_precision_threshold(i))),
            ),
        }
    }
}

/// Scores predictions against ground truth. Metrics are averaged per sequence,
/// then over sequences; frames without a prediction score IoU 0 and fail
/// every precision threshold.
pub fn eval_sot(preds: &[SotPrediction], gts: &[SotGroundTruth]) -> Result<MetricReport, EvalError> {
    if gts.is_empty() {
        return Err(EvalError::EmptyGroundTruth("no sequences".into()));
    }
    let mut gt_ids = BTreeSet::new();
    for g in gts {
        if g.boxes.is_empty() {
            return Err(EvalError::EmptyGroundTruth(g.sequence_id.clone()));
        }
        if !gt_ids.insert(g.sequence_id.as_str()) {
            return Err(EvalError::Duplicate(g.sequence_id.clone()));
        }
    }
    let mut by_id: BTreeMap<&str, &SotPrediction> = BTreeMap::new();
    for p in preds {
        let Some(gt) = gts.iter().find(|g| g.sequence_id == p.sequence_id) else {
            return Err(EvalError::UnknownSequence(p.sequence_id.clone()));
        };
        if by_id.insert(p.sequence_id.as_str(), p).is_some() {
            return Err(EvalError::Duplicate(p.sequence_id.clone()));
        }
        if let Some(f) = p.boxes.keys().find(|f| **f == 0 || **f > gt.frame_count) {
            return Err(EvalError::FrameOutOfRange { sequence: p.sequence_id.clone(), frame: *f, frame_count: gt.frame_count });
        }
    }

    let mut report = MetricReport::default();
    let mut per_seq = Vec::with_capacity(gts.len());
    let mut by_category: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let (mut frames, mut missing_frames, mut missing_sequences) = (0u64, 0u64, 0u64);
    for g in gts {
        let pred = by_id.get(g.sequence_id.as_str()).copied();
        if pred.is_none() {
            missing_sequences += 1;
            report.warnings.push(format!("no prediction for sequence {:?}; scored as empty", g.sequence_id));
        }
        let scores = score_frames(g, pred);
        frames += scores.ious.len() as u64;
        missing_frames += scores.center_errors.iter().filter(|e| e.is_none()).count() as u64;
        let m = SequenceMetrics::from_scores(&scores);
        if let Some(cat) = &g.category {
            by_category.entry(cat.clone()).or_default().push(m.ao);
        }
        per_seq.push(m);
    }
    let agg = |f: fn(&SequenceMetrics) -> f64| mean(per_seq.iter().map(f));
    report.metrics.insert("ao".into(), agg(|m| m.ao));
    report.metrics.insert("sr_0.5".into(), agg(|m| m.sr50));
    report.metrics.insert("sr_0.75".into(), agg(|m| m.sr75));
    report.metrics.insert("success".into(), agg(|m| m.success));
    report.metrics.insert("precision".into(), agg(|m| m.precision));
    report.metrics.insert("norm_precision".into(), agg(|m| m.norm_precision));
    report.per_category = by_category.into_iter().map(|(k, v)| (k, mean(v))).collect();
    report.counts.insert("sequences".into(), gts.len() as u64);
    report.counts.insert("frames".into(), frames);
    report.counts.insert("missing_frames".into(), missing_frames);
    report.counts.insert("missing_sequences".into(), missing_sequences);
    Ok(report)
}

/// Question categories of the future-reasoning benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChoiceCategory {
    /// Object localization
    OL,
    /// Physical property reasoning
    PPR,
    /// Function reasoning
    FR,
    /// Identity reasoning
    IR,
    /// Future prediction
    FP,
}

impl ChoiceCategory {
    pub const ALL: [ChoiceCategory; 5] =
        [ChoiceCategory::OL, ChoiceCategory::PPR, ChoiceCategory::FR, ChoiceCategory::IR, ChoiceCategory::FP];

    pub fn as_str(&self) -> &'static str {
        match self {
            ChoiceCategory::OL => "OL",
            ChoiceCategory::PPR => "PPR",
            ChoiceCategory::FR => "FR",
            ChoiceCategory::IR => "IR",
            ChoiceCategory::FP => "FP",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub question_id: String,
    pub category: ChoiceCategory,
    /// `None` when the response could not be matched to an option.
    pub predicted: Option<char>,
    pub gold: char,
}

/// Maps a free-text response to an option letter: a leading letter such as
/// `B`, `(B)`, `B.` or `B) text`, else the single option whose text occurs
/// in the response.
pub fn extract_choice(response: &str, options: &BTreeMap<char, String>) -> Option<char> {
    let t = response.trim();
    let t = t.strip_prefix("Answer:").or_else(|| t.strip_prefix("answer:")).unwrap_or(t).trim_start();
    let t = t.strip_prefix('(').unwrap_or(t);
    let mut chars = t.chars();
    if let Some(c) = chars.next() {
        let up = c.to_ascii_uppercase();
        let next = chars.next();
        let letter_like = c.is_ascii_uppercase() || next.is_some_and(|n| matches!(n, ')' | '.' | ':'));
        let wanted = options.is_empty() || options.contains_key(&up);
        if c.is_ascii_alphabetic() && letter_like && wanted && next.is_none_or(|n| !n.is_alphanumeric()) {
            return Some(up);
        }
    }
    let lower = response.to_lowercase();
    let hits: Vec<char> = options
        .iter()
        .filter(|(_, text)| !text.trim().is_empty() && lower.contains(&text.trim().to_lowercase()))
        .map(|(k, _)| *k)
        .collect();
    match hits[..] {
        [one] => Some(one),
        _ => None,
    }
}

/// Per-category accuracy and the unweighted mean of the present categories.
pub fn eval_choice_benchmark(records: &[ChoiceRecord]) -> Result<MetricReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut ids = BTreeSet::new();
    let mut tally: BTreeMap<ChoiceCategory, (u64, u64)> = BTreeMap::new();
    let mut unmatched = 0u64;
    for r in records {
        if !ids.insert(r.question_id.as_str()) {
            return Err(EvalError::Duplicate(r.question_id.clone()));
        }
        let e = tally.entry(r.category).or_default();
        e.1 += 1;
        match r.predicted {
            Some(p) if p.eq_ignore_ascii_case(&r.gold) => e.0 += 1,
            Some(_) => {}
            None => unmatched += 1,
        }
    }
    let mut report = MetricReport::default();
    for cat in ChoiceCategory::ALL {
        match tally.get(&cat) {
            Some((correct, total)) => {
                report.per_category.insert(cat.as_str().into(), *correct as f64 / *total as f64);
                report.counts.insert(format!("{}/total", cat.as_str()), *total);
            }
            None => report.warnings.push(format!("category {} has no records and is excluded from avg", cat.as_str())),
        }
    }
    report.metrics.insert("avg".into(), mean(report.per_category.values().copied()));
    let correct: u64 = tally.values().map(|(c, _)| c).sum();
    report.metrics.insert("overall_accuracy".into(), correct as f64 / records.len() as f64);
    report.counts.insert("records".into(), records.len() as u64);
    report.counts.insert("unmatched".into(), unmatched);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl YesNo {
    /// Polling convention: a response containing the word "no" or "not" is a no, anything else a yes.
    pub fn from_response(text: &str) -> YesNo {
        let lower = text.to_lowercase();
        let negative = lower
            .split(|c: char| !c.is_alphanumeric() && c != '\'')
            .any(|w| matches!(w, "no" | "not" | "isn't" | "aren't" | "doesn't" | "don't"));
        if negative {
            YesNo::No
        } else {
            YesNo::Yes
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopeSplit {
    Random,
    Popular,
    Adversarial,
}

impl PopeSplit {
    pub fn as_str(&self) -> &'static str {
        match self {
            PopeSplit::Random => "random",
            PopeSplit::Popular => "popular",
            PopeSplit::Adversarial => "adversarial",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopeRecord {
    pub question_id: String,
    pub predicted: YesNo,
    pub gold: YesNo,
    pub split: PopeSplit,
}

/// Accuracy, precision, recall, F1 (yes is positive) and yes-rate per split,
/// keyed `<split>/<metric>`.
pub fn eval_pope(records: &[PopeRecord]) -> Result<MetricReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut ids = BTreeSet::new();
    let mut splits: BTreeMap<PopeSplit, [u64; 4]> = BTreeMap::new();
    for r in records {
        if !ids.insert((r.split, r.question_id.as_str())) {
            return Err(EvalError::Duplicate(r.question_id.clone()));
        }
        // [tp, fp, tn, fn]
        let c = splits.entry(r.split).or_default();
        match (r.predicted, r.gold) {
            (YesNo::Yes, YesNo::Yes) => c[0] += 1,
            (YesNo::Yes, YesNo::No) => c[1] += 1,
            (YesNo::No, YesNo::No) => c[2] += 1,
            (YesNo::No, YesNo::Yes) => c[3] += 1,
        }
    }
    let mut report = MetricReport::default();
    for (split, [tp, fp, tn, fn_]) in splits {
        let n = (tp + fp + tn + fn_) as f64;
        let name = split.as_str();
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            report.warnings.push(format!("{name}: precision + recall = 0, F1 reported as 0"));
            0.0
        };
        report.metrics.insert(format!("{name}/accuracy"), (tp + tn) as f64 / n);
        report.metrics.insert(format!("{name}/precision"), precision);
        report.metrics.insert(format!("{name}/recall"), recall);
        report.metrics.insert(format!("{name}/f1"), f1);
        report.metrics.insert(format!("{name}/yes_rate"), (tp + fp) as f64 / n);
        report.counts.insert(format!("{name}/records"), n as u64);
    }
    Ok(report)
}

#[derive(Debug, Deserialize)]
struct ResponseLine {
    sequence_id: String,
    width: u32,
    height: u32,
    response: String,
}

/// A problem met while turning one response line into a prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResponseDiagnostic {
    pub line: usize,
    pub sequence_id: Option<String>,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub parse: Vec<Diagnostic>,
}

/// Reads `{sequence_id, width, height, response}` lines and parses each response
/// into a prediction. Unparseable responses become empty predictions with a
/// diagnostic; only unreadable files and unknown sequences are hard errors.
pub fn score_response_file(
    path: &Path,
    gts: &[SotGroundTruth],
    mode: ParseMode,
) -> Result<(Vec<SotPrediction>, Vec<ResponseDiagnostic>), EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    score_responses(&text, gts, mode)
}

pub fn score_responses(
    text: &str,
    gts: &[SotGroundTruth],
    mode: ParseMode,
) -> Result<(Vec<SotPrediction>, Vec<ResponseDiagnostic>), EvalError> {
    let mut preds = Vec::new();
    let mut diags = Vec::new();
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() {
            continue;
        }
        let row: ResponseLine = match serde_json::from_str(line) {
            Ok(r) => r,
            Err(e) => {
                diags.push(ResponseDiagnostic { line: lineno, sequence_id: None, message: format!("unreadable line: {e}"), parse: vec![] });
                continue;
            }
        };
        let gt = gts
            .iter()
            .find(|g| g.sequence_id == row.sequence_id)
            .ok_or_else(|| EvalError::UnknownSequence(row.sequence_id.clone()))?;
        let mut diag = |message: String, parse: Vec<Diagnostic>| {
            diags.push(ResponseDiagnostic { line: lineno, sequence_id: Some(row.sequence_id.clone()), message, parse })
        };
        let mut boxes = BTreeMap::new();
        match parse_response(&row.response, mode) {
            Err(e) => diag(format!("response rejected: {e}"), vec![]),
            Ok(parsed) => {
                let noisy = !parsed.diagnostics.is_empty();
                match parsed.tracklets.iter().min_by_key(|t| t.id) {
                    None => diag("no trajectory found in response".into(), parsed.diagnostics.clone()),
                    Some(track) => {
                        for (frame, nb) in &track.boxes {
                            if *frame > gt.frame_count {
                                diag(format!("frame {frame} beyond sequence length {}", gt.frame_count), vec![]);
                                continue;
                            }
                            match denormalize_box(nb, row.width, row.height) {
                                Ok(b) => {
                                    boxes.insert(*frame, b);
                                }
                                Err(e) => diag(e.to_string(), vec![]),
                            }
                        }
                        if noisy {
                            diag("response parsed with diagnostics".into(), parsed.diagnostics.clone());
                        }
                    }
                }
            }
        }
        preds.push(SotPrediction { sequence_id: row.sequence_id, boxes });
    }
    Ok((preds, diags))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    fn gt(id: &str, boxes: &[(u32, BoundingBox)]) -> SotGroundTruth {
        SotGroundTruth {
            sequence_id: id.into(),
            width: 1000,
            height: 1000,
            frame_count: 5,
            category: None,
            boxes: boxes.iter().copied().collect(),
        }
    }

    fn pred(id: &str, boxes: &[(u32, BoundingBox)]) -> SotPrediction {
        SotPrediction { sequence_id: id.into(), boxes: boxes.iter().copied().collect() }
    }

    #[test]
    fn perfect_tracker() {
        let boxes = [(1, bb(0.0, 0.0, 10.0, 10.0)), (2, bb(5.0, 5.0, 50.0, 40.0))];
        let r = eval_sot(&[pred("a", &boxes)], &[gt("a", &boxes)]).unwrap();
        for m in ["ao", "sr_0.5", "sr_0.75", "precision", "norm_precision"] {
            assert_eq!(r.metric(m), Some(1.0), "{m}");
        }
        // strict threshold: IoU 1.0 does not exceed 1.0
        assert!((r.metric("success").unwrap() - 50.0 / 51.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_tracker() {
        let r = eval_sot(&[pred("a", &[(1, bb(100.0, 100.0, 110.0, 110.0))])], &[gt("a", &[(1, bb(0.0, 0.0, 10.0, 10.0))])])
            .unwrap();
        assert_eq!(r.metric("ao"), Some(0.0));
        assert_eq!(r.metric("sr_0.5"), Some(0.0));
        assert_eq!(r.metric("success"), Some(0.0));
    }

    #[test]
    fn two_sequence_aggregation() {
        // IoU 0.6: gt [0,0,10,10], pred [0,0,10,6] -> 60/100
        // IoU 0.4: gt [0,0,10,10], pred [0,0,10,4]
        let g = bb(0.0, 0.0, 10.0, 10.0);
        let gts = [gt("s1", &[(1, g), (2, g)]), gt("s2", &[(1, g)])];
        let preds = [pred("s1", &[(1, g), (2, bb(0.0, 0.0, 10.0, 6.0))]), pred("s2", &[(1, bb(0.0, 0.0, 10.0, 4.0))])];
        let r = eval_sot(&preds, &gts).unwrap();
        assert!((r.metric("ao").unwrap() - 0.6).abs() < 1e-12);
        assert!((r.metric("sr_0.5").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sot_errors_and_missing() {
        let g = gt("a", &[(1, bb(0.0, 0.0, 10.0, 10.0))]);
        assert!(matches!(eval_sot(&[pred("zz", &[])], std::slice::from_ref(&g)), Err(EvalError::UnknownSequence(_))));
        assert!(matches!(eval_sot(&[], &[]), Err(EvalError::EmptyGroundTruth(_))));
        assert!(matches!(eval_sot(&[], &[gt("b", &[])]), Err(EvalError::EmptyGroundTruth(_))));
        assert!(matches!(
            eval_sot(&[pred("a", &[(9, bb(0.0, 0.0, 1.0, 1.0))])], std::slice::from_ref(&g)),
            Err(EvalError::FrameOutOfRange { frame: 9, .. })
        ));
        let r = eval_sot(&[], &[g]).unwrap();
        assert_eq!(r.metric("ao"), Some(0.0));
        assert_eq!(r.counts["missing_sequences"], 1);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn normalized_precision_uses_box_size() {
        // gt 100x10 box; prediction shifted 10px right: pixel error 10 (<= 20), normalized 0.1
        let g = gt("a", &[(1, bb(0.0, 0.0, 100.0, 10.0))]);
        let r = eval_sot(&[pred("a", &[(1, bb(10.0, 0.0, 110.0, 10.0))])], &[g]).unwrap();
        assert_eq!(r.metric("precision"), Some(1.0));
        // thresholds 0.10..=0.50 pass: 41 of 51
        assert!((r.metric("norm_precision").unwrap() - 41.0 / 51.0).abs() < 1e-12);
    }

    fn choice(id: &str, cat: ChoiceCategory, p: Option<char>, g: char) -> ChoiceRecord {
        ChoiceRecord { question_id: id.into(), category: cat, predicted: p, gold: g }
    }

    #[test]
    fn choice_accuracy() {
        use ChoiceCategory::*;
        let all: Vec<_> = ChoiceCategory::ALL.iter().enumerate().map(|(i, c)| choice(&i.to_string(), *c, Some('A'), 'A')).collect();
        let r = eval_choice_benchmark(&all).unwrap();
        assert_eq!(r.metric("avg"), Some(1.0));
        assert!(r.warnings.is_empty());

        let partial = [choice("1", OL, Some('A'), 'A'), choice("2", OL, None, 'B'), choice("3", FP, Some('C'), 'C')];
        let r = eval_choice_benchmark(&partial).unwrap();
        assert_eq!(r.metric("avg"), Some(0.75));
        assert_eq!(r.warnings.len(), 3);
        assert_eq!(r.counts["unmatched"], 1);

        let dup = [choice("1", OL, Some('A'), 'A'), choice("1", FP, Some('A'), 'A')];
        assert!(matches!(eval_choice_benchmark(&dup), Err(EvalError::Duplicate(_))));
        assert!(matches!(eval_choice_benchmark(&[]), Err(EvalError::NoRecords)));
    }

    #[test]
    fn choice_extraction() {
        let opts: BTreeMap<char, String> =
            [('A', "The ball will fall".to_string()), ('B', "The ball will rise".to_string())].into_iter().collect();
        assert_eq!(extract_choice("B", &opts), Some('B'));
        assert_eq!(extract_choice("(a) the ball will fall", &opts), Some('A'));
        assert_eq!(extract_choice("Answer: B. rise", &opts), Some('B'));
        assert_eq!(extract_choice("I think the ball will rise.", &opts), Some('B'));
        assert_eq!(extract_choice("Absolutely unclear", &opts), None);
        assert_eq!(extract_choice("", &opts), None);
    }

    fn pope(id: usize, p: YesNo, g: YesNo) -> PopeRecord {
        PopeRecord { question_id: id.to_string(), predicted: p, gold: g, split: PopeSplit::Random }
    }

    #[test]
    fn pope_metrics() {
        let gold = |i: usize| if i.is_multiple_of(2) { YesNo::Yes } else { YesNo::No };
        let perfect: Vec<_> = (0..10).map(|i| pope(i, gold(i), gold(i))).collect();
        let r = eval_pope(&perfect).unwrap();
        assert_eq!(r.metric("random/accuracy"), Some(1.0));
        assert_eq!(r.metric("random/f1"), Some(1.0));
        assert_eq!(r.metric("random/yes_rate"), Some(0.5));

        let all_yes: Vec<_> = (0..10).map(|i| pope(i, YesNo::Yes, gold(i))).collect();
        let r = eval_pope(&all_yes).unwrap();
        assert_eq!(r.metric("random/accuracy"), Some(0.5));
        assert_eq!(r.metric("random/yes_rate"), Some(1.0));
        assert!((r.metric("random/f1").unwrap() - 2.0 / 3.0).abs() < 1e-12);

        let degenerate: Vec<_> = (0..4).map(|i| pope(i, YesNo::No, YesNo::No)).collect();
        let r = eval_pope(&degenerate).unwrap();
        assert_eq!(r.metric("random/f1"), Some(0.0));
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn yes_no_convention() {
        assert_eq!(YesNo::from_response("Yes, there is a dog."), YesNo::Yes);
        assert_eq!(YesNo::from_response("No, there is not."), YesNo::No);
        assert_eq!(YesNo::from_response("There isn't any dog"), YesNo::No);
        assert_eq!(YesNo::from_response("Nothing suggests otherwise"), YesNo::Yes);
    }

    #[test]
    fn response_scoring() {
        let gts: Vec<_> = (0..100)
            .map(|i| SotGroundTruth {
                sequence_id: format!("s{i}"),
                width: 640,
                height: 480,
                frame_count: 3,
                category: None,
                boxes: [(1, bb(64.0, 48.0, 320.0, 240.0))].into_iter().collect(),
            })
            .collect();
        let mut text = String::new();
        for i in 0..100 {
            let response = if i == 42 { "I cannot tell.".to_string() } else { "<Id1>Frame 1:[100,100,500,500]</Id1>".to_string() };
            text.push_str(&serde_json::json!({"sequence_id": format!("s{i}"), "width": 640, "height": 480, "response": response}).to_string());
            text.push('\n');
        }
        let (preds, diags) = score_responses(&text, &gts, ParseMode::Lenient).unwrap();
        assert_eq!(preds.len(), 100);
        assert_eq!(preds.iter().filter(|p| p.boxes.is_empty()).count(), 1);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].sequence_id.as_deref(), Some("s42"));
        assert_eq!(preds[0].boxes[&1], bb(64.0, 48.0, 320.0, 240.0));
        let r = eval_sot(&preds, &gts).unwrap();
        assert!((r.metric("ao").unwrap() - 0.99).abs() < 1e-12);

        let unknown = r#"{"sequence_id": "nope", "width": 1, "height": 1, "response": ""}"#;
        match score_responses(unknown, &gts, ParseMode::Lenient) {
            Err(EvalError::UnknownSequence(id)) => assert_eq!(id, "nope"),
            other => panic!("{other:?}"),
        }
    }
}
