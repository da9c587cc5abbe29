//! `forge eval`: scores prediction files and writes `report.json`.

use std::collections::BTreeMap;
use std::path::Path;

use forge_core::eval::{
    eval_choice_benchmark, eval_pope, eval_sot, extract_choice, score_responses, ChoiceCategory, ChoiceRecord,
    PopeRecord, PopeSplit, ResponseDiagnostic, SotGroundTruth, YesNo,
};
use forge_core::trajgrammar::ParseMode;
use forge_core::MetricReport;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::{sha256_hex, TOOL_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EvalKind {
    Sot,
    Choice,
    Pope,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub kind: EvalKind,
    pub tool_version: String,
    pub input_digests: BTreeMap<String, String>,
    #[serde(flatten)]
    pub report: MetricReport,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<ResponseDiagnostic>,
}

fn read(path: &Path, digests: &mut BTreeMap<String, String>) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    digests.insert(path.display().to_string(), sha256_hex(&bytes));
    String::from_utf8(bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Non-blank lines with their 1-based numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty())
}

fn parse_lines<T: for<'de> Deserialize<'de>>(text: &str, path: &Path, kind: &str) -> CliResult<Vec<T>> {
    lines(text)
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| CliError::input(format!("{}:{n}: not a {kind} record: {e}", path.display())))
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SotLine {
    #[allow(dead_code)]
    sequence_id: String,
    #[allow(dead_code)]
    width: u32,
    #[allow(dead_code)]
    height: u32,
    #[allow(dead_code)]
    response: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChoiceLine {
    question_id: String,
    category: ChoiceCategory,
    gold: char,
    #[serde(default)]
    predicted: Option<char>,
    /// Free-text answer, mapped to a letter when `predicted` is absent.
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    options: BTreeMap<char, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PopeLine {
    question_id: String,
    /// `yes`/`no` or a free-text answer.
    predicted: String,
    gold: YesNo,
    split: PopeSplit,
}

fn eval_err(e: forge_core::eval::EvalError) -> CliError {
    CliError::input(e)
}

pub fn cmd_eval(kind: EvalKind, pred: &Path, gt: Option<&Path>, mode: ParseMode) -> CliResult<EvalReport> {
    let mut digests = BTreeMap::new();
    let text = read(pred, &mut digests)?;
    if lines(&text).next().is_none() {
        return Err(CliError::input(format!("{}: no records", pred.display())));
    }
    let mut diagnostics = Vec::new();
    let report = match kind {
        EvalKind::Sot => {
            // the schema is checked up front; individual garbage responses are tolerated later
            parse_lines::<SotLine>(&text, pred, "sot prediction")?;
            let gt = gt.ok_or_else(|| CliError::input("sot evaluation needs --gt (or eval.ground_truth in the config)"))?;
            let gt_text = read(gt, &mut digests)?;
            let gts: Vec<SotGroundTruth> = parse_lines(&gt_text, gt, "sot ground-truth")?;
            let (preds, diags) = score_responses(&text, &gts, mode).map_err(eval_err)?;
            diagnostics = diags;
            eval_sot(&preds, &gts).map_err(eval_err)?
        }
        EvalKind::Choice => {
            let rows: Vec<ChoiceLine> = parse_lines(&text, pred, "choice")?;
            let records: Vec<ChoiceRecord> = rows
                .into_iter()
                .map(|r| ChoiceRecord {
                    question_id: r.question_id,
                    category: r.category,
                    predicted: r.predicted.or_else(|| r.response.as_deref().and_then(|t| extract_choice(t, &r.options))),
                    gold: r.gold.to_ascii_uppercase(),
                })
                .collect();
            eval_choice_benchmark(&records).map_err(eval_err)?
        }
        EvalKind::Pope => {
            let rows: Vec<PopeLine> = parse_lines(&text, pred, "pope")?;
            let records: Vec<PopeRecord> = rows
                .into_iter()
                .map(|r| PopeRecord {
                    question_id: r.question_id,
                    predicted: YesNo::from_response(&r.predicted),
                    gold: r.gold,
                    split: r.split,
                })
                .collect();
            eval_pope(&records).map_err(eval_err)?
        }
    };
    Ok(EvalReport { kind, tool_version: TOOL_VERSION.into(), input_digests: digests, report, diagnostics })
}

/// Headline lines, scaled ×100 to one decimal.
pub fn headline(report: &EvalReport) -> Vec<String> {
    let r = &report.report;
    let pct = |v: f64| format!("{:.1}", v * 100.0);
    let mut out = Vec::new();
    match report.kind {
        EvalKind::Sot => {
            for (key, label) in [
                ("ao", "AO"),
                ("sr_0.5", "SR0.5"),
                ("sr_0.75", "SR0.75"),
                ("success", "Success"),
                ("precision", "P"),
                ("norm_precision", "P_norm"),
            ] {
                if let Some(v) = r.metric(key) {
                    out.push(format!("{label} {}", pct(v)));
                }
            }
        }
        EvalKind::Choice => {
            for (cat, v) in &r.per_category {
                out.push(format!("{cat} {}", pct(*v)));
            }
            if let Some(v) = r.metric("avg") {
                out.push(format!("Avg {}", pct(v)));
            }
        }
        EvalKind::Pope => {
            for (key, v) in &r.metrics {
                let (split, metric) = key.split_once('/').unwrap_or(("", key));
                if matches!(metric, "accuracy" | "f1" | "yes_rate") {
                    out.push(format!("{split} {metric} {}", pct(*v)));
                }
            }
        }
    }
    out
}
