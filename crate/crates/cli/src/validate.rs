//! `forge validate`: re-checks every corpus record.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use forge_core::convbuilder::TemplateCatalog;
use forge_core::trajgrammar::{parse_response, render_frame_markers, trajectory_prefix_len, ParseMode};
use forge_core::{ConversationRecord, Task};
use serde::Serialize;

use crate::corpus::CorpusRecord;
use crate::error::{CliError, CliResult};
use crate::store::jsonl_files;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Zero-based position of the record in the corpus, in shard order.
    pub record: usize,
    pub file: String,
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub records: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.records > 0 && self.violations.is_empty()
    }
}

fn check_trajectory(text: &str, frames: usize, mode: ParseMode) -> Result<(), String> {
    let parsed = parse_response(text, mode).map_err(|e| e.to_string())?;
    if parsed.has_errors() {
        return Err("trajectory has grammar errors".into());
    }
    if parsed.tracklets.is_empty() || !parsed.detections.is_empty() {
        return Err("expected only Id blocks".into());
    }
    for (n, t) in (1u32..).zip(&parsed.tracklets) {
        if t.id != n {
            return Err(format!("Id blocks must be numbered 1..n in order, found Id{} at position {n}", t.id));
        }
        if t.boxes.is_empty() {
            return Err(format!("Id{} has no frame entries", t.id));
        }
        if let Some(f) = t.boxes.keys().find(|f| **f == 0 || **f as usize > frames) {
            return Err(format!("Id{} references frame {f} of {frames}", t.id));
        }
    }
    Ok(())
}

/// Grammar and invariant checks for one record.
pub fn check_record(rec: &CorpusRecord, catalog: &TemplateCatalog, mode: ParseMode) -> Result<(), String> {
    let conv: ConversationRecord = rec.to_record()?;
    let template = catalog.get(conv.task, &conv.variant).map_err(|e| e.to_string())?;
    conv.validate(Some(&template.negative_answer)).map_err(|e| e.to_string())?;
    let markers = render_frame_markers(&conv.frames).map_err(|e| e.to_string())?;
    if !conv.question.starts_with(&markers) {
        return Err("question does not start with one frame marker per image".into());
    }
    if conv.is_negative {
        return Ok(());
    }
    let frames = conv.frames.len();
    match (conv.task, conv.variant.as_str()) {
        (Task::Detection, _) => {
            let parsed = parse_response(&conv.answer, mode).map_err(|e| e.to_string())?;
            if parsed.has_errors() || parsed.detections.is_empty() || !parsed.tracklets.is_empty() {
                return Err("detection answer is not category:[box] groups".into());
            }
        }
        (Task::Tracking, _) | (Task::Referring, "grounding") => check_trajectory(&conv.answer, frames, mode)?,
        (Task::Fit, _) => {
            let end = trajectory_prefix_len(&conv.answer).ok_or("fit answer has no trajectory block")?;
            check_trajectory(&conv.answer[..end], frames, mode)?;
            let rest = conv.answer[end..].trim();
            if Some(rest) != conv.future_text.as_deref().map(str::trim) {
                return Err("fit answer must be the trajectory followed by the future text".into());
            }
            if rest.contains("<Id") || rest.contains("</Id") {
                return Err("future text contains Id tokens".into());
            }
        }
        _ => {}
    }
    Ok(())
}

fn corpus_files(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.is_dir() {
        jsonl_files(path)
    } else if path.is_file() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(CliError::input(format!("{}: no such file or directory", path.display())))
    }
}

pub fn cmd_validate(path: &Path, catalog: &TemplateCatalog, mode: ParseMode) -> CliResult<ValidationReport> {
    let mut report = ValidationReport::default();
    let mut ids = BTreeSet::new();
    for file in corpus_files(path)? {
        let text = std::fs::read_to_string(&file).map_err(|e| CliError::input(format!("{}: {e}", file.display())))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record = report.records;
            report.records += 1;
            let mut fail = |message: String| {
                report.violations.push(Violation { record, file: file.display().to_string(), line: i + 1, message })
            };
            let rec: CorpusRecord = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(e) => {
                    fail(format!("schema: {e}"));
                    continue;
                }
            };
            if !ids.insert(rec.id.clone()) {
                fail(format!("duplicate id {}", rec.id));
            }
            if let Err(m) = check_record(&rec, catalog, mode) {
                fail(m);
            }
        }
    }
    Ok(report)
}
