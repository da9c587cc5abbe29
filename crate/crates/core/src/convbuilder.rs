//! Conversation record construction: multi-frame pre-training records,
//! trajectory-first future-reasoning records, negatives and caption passthrough.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::ReferringRecord;
use crate::model::{normalize_box, ClipSample, ConversationRecord, FrameRef, Observation, ObservationKind, Task, Tracklet};
use crate::seeding::{record_rng, record_seed, Purpose};
use crate::trajgrammar::{render_frame_markers, serialize_detection, serialize_trajectory, GrammarError};

const BUILTIN_CATALOG: &str = include_str!("../data/templates.json");

/// Reasons a record is not produced; counted by the caller rather than treated as failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    EmptyClip,
    NotQueryable,
    DistractorsExhausted,
    NoAction,
    EmptyCaption,
    FrameCount,
}

impl SkipReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SkipReason::EmptyClip => "empty_clip",
            SkipReason::NotQueryable => "not_queryable",
            SkipReason::DistractorsExhausted => "distractors_exhausted",
            SkipReason::NoAction => "no_action",
            SkipReason::EmptyCaption => "empty_caption",
            SkipReason::FrameCount => "frame_count",
        }
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("skipped: {}", .0.as_str())]
    Skip(SkipReason),
    #[error("no template for task {task} variant {variant:?}")]
    MissingTemplate { task: Task, variant: String },
    #[error("invalid template catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error("text generation failed for prompt {prompt_hash} (retriable: {retriable}): {message}")]
    TextGen { prompt_hash: String, message: String, retriable: bool },
    #[error("future observation is empty or contains Id tokens")]
    InvalidFuture,
    #[error("future basis is empty or lacks action descriptions")]
    InvalidBasis,
}

impl BuildError {
    pub fn skip_reason(&self) -> Option<SkipReason> {
        match self {
            BuildError::Skip(r) => Some(*r),
            _ => None,
        }
    }
}

/// Question wording and answer conventions for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub task: Task,
    #[serde(default = "default_variant")]
    pub variant: String,
    /// Patterns with `{markers}`, `{query}` and `{format_hint}` slots.
    pub question_patterns: Vec<String>,
    pub format_hint: String,
    pub negative_answer: String,
}

fn default_variant() -> String {
    "default".into()
}

impl TaskTemplate {
    pub fn validate(&self) -> Result<(), BuildError> {
        let bad = |m: String| Err(BuildError::Catalog(format!("{}/{}: {m}", self.task, self.variant)));
        if self.question_patterns.is_empty() {
            return bad("no question patterns".into());
        }
        if self.negative_answer.trim().is_empty() {
            return bad("empty negative answer".into());
        }
        let needs_hint = matches!(self.task, Task::Detection | Task::Tracking | Task::Fit);
        if needs_hint && self.format_hint.trim().is_empty() {
            return bad("format hint required".into());
        }
        for p in &self.question_patterns {
            if !p.contains("{markers}") {
                return bad(format!("pattern {p:?} lacks {{markers}}"));
            }
            if needs_hint && !p.contains("{format_hint}") {
                return bad(format!("pattern {p:?} lacks {{format_hint}}"));
            }
        }
        Ok(())
    }

    /// Fills the pattern chosen by `seed`/`record_index`.
    fn question(&self, markers: &str, query: &str, seed: u64, record_index: u64) -> String {
        let mut rng = record_rng(seed, record_index, Purpose::Template);
        let pattern = self.question_patterns.choose(&mut rng).expect("validated nonempty");
        fill_pattern(pattern, markers, query, &self.format_hint)
    }
}

pub fn fill_pattern(pattern: &str, markers: &str, query: &str, format_hint: &str) -> String {
    pattern
        .replace("{markers}", markers)
        .replace("{query}", query)
        .replace("{format_hint}", format_hint)
        .trim_end()
        .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateCatalog {
    pub templates: Vec<TaskTemplate>,
}

impl TemplateCatalog {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_CATALOG).expect("bundled catalog is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, BuildError> {
        let cat: Self = serde_json::from_str(text).map_err(|e| BuildError::Catalog(e.to_string()))?;
        cat.templates.iter().try_for_each(TaskTemplate::validate)?;
        Ok(cat)
    }

    pub fn get(&self, task: Task, variant: &str) -> Result<&TaskTemplate, BuildError> {
        self.templates
            .iter()
            .find(|t| t.task == task && t.variant == variant)
            .ok_or_else(|| BuildError::MissingTemplate { task, variant: variant.to_string() })
    }

    pub fn default_for(&self, task: Task) -> Result<&TaskTemplate, BuildError> {
        self.get(task, "default")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Deterministic,
    External,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{message}")]
pub struct TextGenError {
    pub message: String,
    pub retriable: bool,
}

/// A single-prompt, single-completion text generator. Must tolerate calls from several workers.
pub trait TextGenClient: Send + Sync {
    fn generate(&self, prompt: &str) -> Result<String, TextGenError>;
    fn capability(&self) -> Capability;
}

/// Offline generator that turns the subject lines of a future-reasoning prompt
/// into a templated sentence.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateClient;

impl TextGenClient for TemplateClient {
    fn generate(&self, prompt: &str) -> Result<String, TextGenError> {
        let subjects: Vec<(&str, &str)> = prompt
            .lines()
            .filter_map(|l| l.strip_prefix("- Id"))
            .filter_map(|l| {
                let (_, rest) = l.split_once(" (")?;
                let (category, rest) = rest.split_once("): ")?;
                let (action, _) = rest.split_once(" | trajectory: ")?;
                Some((category, action))
            })
            .collect();
        match subjects.as_slice() {
            [] => Err(TextGenError { message: "prompt lists no subjects".into(), retriable: false }),
            [(cat, action)] => Ok(format!(
                "Judging from its trajectory, the {cat} is {action}, and it will most likely keep doing so in the upcoming frames."
            )),
            many => {
                let parts: Vec<String> =
                    (1..).zip(many).map(|(i, (cat, action))| format!("the {cat} (Id{i}) is {action}")).collect();
                let (last, init) = parts.split_last().expect("at least two");
                Ok(format!(
                    "Judging from their trajectories, {} and {last}; these actions will most likely continue in the upcoming frames.",
                    init.join(", ")
                ))
            }
        }
    }

    fn capability(&self) -> Capability {
        Capability::Deterministic
    }
}

/// Knobs for record construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuilderConfig {
    pub negative_ratio: f64,
    /// Vocabulary from which absent categories are drawn for negatives.
    pub distractors: Vec<String>,
    /// Prefix trajectory answers with the subject category (`cat<Id1>...`).
    pub category_prefix: bool,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            negative_ratio: 0.1,
            distractors: [
                "person", "bicycle", "car", "motorcycle", "bus", "truck", "boat", "bird", "cat", "dog", "horse",
                "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "umbrella", "chair", "couch", "bench",
                "kite", "airplane", "train", "traffic light",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            category_prefix: false,
        }
    }
}

fn location_text(subject: &Tracklet, frame: &FrameRef) -> Result<String, BuildError> {
    let b = subject.boxes.get(&frame.index).ok_or(BuildError::Skip(SkipReason::NotQueryable))?;
    Ok(normalize_box(b, frame.width, frame.height).map_err(GrammarError::from)?.to_string())
}

/// Draws one of the observation kinds the subject supports in the first frame.
pub fn select_observation<R: Rng + ?Sized>(
    subject: &Tracklet,
    first_frame: &FrameRef,
    rng: &mut R,
) -> Result<Observation, BuildError> {
    if !subject.boxes.contains_key(&first_frame.index) {
        return Err(BuildError::Skip(SkipReason::NotQueryable));
    }
    let mut kinds = vec![ObservationKind::Location];
    let nonempty = |s: &Option<String>| s.as_deref().is_some_and(|t| !t.trim().is_empty());
    if nonempty(&subject.appearance) {
        kinds.push(ObservationKind::Appearance);
    }
    if nonempty(&subject.action) {
        kinds.push(ObservationKind::Action);
    }
    let kind = *kinds.choose(rng).expect("location always available");
    let text = match kind {
        ObservationKind::Location => location_text(subject, first_frame)?,
        ObservationKind::Appearance => subject.appearance.clone().unwrap_or_default(),
        ObservationKind::Action => subject.action.clone().unwrap_or_default(),
    };
    Ok(Observation { kind, text, subject_id: subject.id })
}

/// A queried subject with the natural-language query built from its observation.
struct Query<'a> {
    subject: &'a Tracklet,
    observation: Observation,
    text: String,
}

/// Picks a frame-1 subject and phrases a query for it. Text observations
/// shared by several subjects resolve to the lowest id plus its location.
fn query_subject<'a>(
    clip: &'a ClipSample,
    candidates: &[&'a Tracklet],
    seed: u64,
    record_index: u64,
) -> Result<Query<'a>, BuildError> {
    let first = clip.frames.first().ok_or(BuildError::Skip(SkipReason::EmptyClip))?;
    let mut pick = record_rng(seed, record_index, Purpose::Subject);
    let chosen = *candidates.choose(&mut pick).ok_or(BuildError::Skip(SkipReason::NotQueryable))?;
    let mut obs_rng = record_rng(seed, record_index, Purpose::Observation);
    let mut observation = select_observation(chosen, first, &mut obs_rng)?;

    let field = |t: &Tracklet| match observation.kind {
        ObservationKind::Appearance => t.appearance.clone(),
        ObservationKind::Action => t.action.clone(),
        ObservationKind::Location => None,
    };
    let mut subject = chosen;
    let mut disambiguate = false;
    if observation.kind != ObservationKind::Location {
        let same: Vec<&Tracklet> = clip
            .tracklets
            .iter()
            .filter(|t| t.boxes.contains_key(&first.index) && field(t).as_deref() == Some(observation.text.as_str()))
            .collect();
        if same.len() > 1 {
            subject = same.into_iter().min_by_key(|t| t.id).expect("nonempty");
            observation.subject_id = subject.id;
            disambiguate = true;
        }
    }
    let mut text = match observation.kind {
        ObservationKind::Location => format!("the {} at {}", subject.category, observation.text),
        ObservationKind::Appearance => format!("the {} {}", subject.category, observation.text),
        ObservationKind::Action => format!("the {} that is {}", subject.category, observation.text),
    };
    if disambiguate {
        text.push_str(&format!(" located at {}", location_text(subject, first)?));
    }
    Ok(Query { subject, observation, text })
}

fn frame1_subjects(clip: &ClipSample) -> Vec<&Tracklet> {
    let first = clip.frames.first().map(|f| f.index).unwrap_or(1);
    clip.tracklets.iter().filter(|t| t.boxes.contains_key(&first)).collect()
}

/// Categories in first-appearance order.
fn categories(clip: &ClipSample) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for t in &clip.tracklets {
        if !out.contains(&t.category.as_str()) {
            out.push(&t.category);
        }
    }
    out
}

fn join_list(items: &[&str]) -> String {
    match items {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// Detection or tracking record for a clip.
pub fn build_fpt_record(
    clip: &ClipSample,
    template: &TaskTemplate,
    cfg: &BuilderConfig,
    seed: u64,
    record_index: u64,
) -> Result<ConversationRecord, BuildError> {
    if clip.tracklets.is_empty() || clip.frames.is_empty() {
        return Err(BuildError::Skip(SkipReason::EmptyClip));
    }
    let markers = render_frame_markers(&clip.frames)?;
    let (question, answer, observation) = match template.task {
        Task::Detection => {
            if clip.frames.len() != 1 {
                return Err(BuildError::Skip(SkipReason::FrameCount));
            }
            let frame = &clip.frames[0];
            let mut objects = Vec::with_capacity(clip.tracklets.len());
            for t in &clip.tracklets {
                let b = t.boxes.get(&frame.index).ok_or(BuildError::Skip(SkipReason::EmptyClip))?;
                objects.push((t.category.as_str(), normalize_box(b, frame.width, frame.height).map_err(GrammarError::from)?));
            }
            let query = join_list(&categories(clip));
            (template.question(&markers, &query, seed, record_index), serialize_detection(&objects)?, None)
        }
        Task::Tracking => {
            if clip.frames.len() < 2 {
                return Err(BuildError::Skip(SkipReason::FrameCount));
            }
            let q = query_subject(clip, &frame1_subjects(clip), seed, record_index)?;
            let prefix = cfg.category_prefix.then_some(q.subject.category.as_str());
            let traj = serialize_trajectory(&clip.frames, std::slice::from_ref(q.subject), prefix)?;
            (template.question(&markers, &q.text, seed, record_index), traj.text, Some(q.observation))
        }
        other => {
            return Err(BuildError::MissingTemplate { task: other, variant: template.variant.clone() })
        }
    };
    Ok(ConversationRecord {
        task: template.task,
        variant: template.variant.clone(),
        frames: clip.frames.clone(),
        question,
        answer,
        observation,
        future_text: None,
        is_negative: false,
        seed_trace: record_seed(seed, record_index),
    })
}

/// With probability `cfg.negative_ratio`, a record asking about a category absent from the clip.
pub fn inject_negative(
    clip: &ClipSample,
    template: &TaskTemplate,
    cfg: &BuilderConfig,
    seed: u64,
    record_index: u64,
) -> Result<Option<ConversationRecord>, BuildError> {
    if cfg.negative_ratio <= 0.0 {
        return Ok(None);
    }
    let mut rng = record_rng(seed, record_index, Purpose::Negative);
    if rng.random::<f64>() >= cfg.negative_ratio {
        return Ok(None);
    }
    let present: Vec<String> = clip.tracklets.iter().map(|t| t.category.to_lowercase()).collect();
    let mut pool: Vec<&str> = cfg
        .distractors
        .iter()
        .map(String::as_str)
        .filter(|d| !d.trim().is_empty() && !present.contains(&d.to_lowercase()))
        .collect();
    pool.sort_unstable();
    pool.dedup();
    let distractor = *pool.choose(&mut rng).ok_or(BuildError::Skip(SkipReason::DistractorsExhausted))?;
    let markers = render_frame_markers(&clip.frames)?;
    let query = match template.task {
        Task::Detection => distractor.to_string(),
        _ => format!("the {distractor} in Frame 1"),
    };
    Ok(Some(ConversationRecord {
        task: template.task,
        variant: template.variant.clone(),
        frames: clip.frames.clone(),
        question: template.question(&markers, &query, seed, record_index),
        answer: template.negative_answer.clone(),
        observation: None,
        future_text: None,
        is_negative: true,
        seed_trace: record_seed(seed, record_index),
    }))
}

/// One subject feeding a future-reasoning prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FutureBasis {
    pub subject_id: u32,
    pub category: String,
    pub action: String,
    /// The subject's serialized trajectory.
    pub trajectory: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FutureObservation {
    pub text: String,
    /// `(subject id, action description)` pairs the text was composed from.
    pub basis: Vec<(u32, String)>,
}

/// Chooses the queried frame-1 subject with an action and gathers every other
/// subject with an action, in the order their trajectories will be serialized.
pub fn plan_future_basis(clip: &ClipSample, seed: u64, record_index: u64) -> Result<Vec<FutureBasis>, BuildError> {
    let has_action = |t: &&Tracklet| t.action.as_deref().is_some_and(|a| !a.trim().is_empty());
    let candidates: Vec<&Tracklet> = frame1_subjects(clip).into_iter().filter(has_action).collect();
    if candidates.is_empty() {
        return Err(BuildError::Skip(SkipReason::NoAction));
    }
    let mut pick = record_rng(seed, record_index, Purpose::Subject);
    let subject = *candidates.choose(&mut pick).expect("nonempty");
    let mut others: Vec<&Tracklet> = clip.tracklets.iter().filter(has_action).filter(|t| t.id != subject.id).collect();
    others.sort_by_key(|t| (t.first_frame(), t.id));
    std::iter::once(subject)
        .chain(others)
        .map(|t| {
            Ok(FutureBasis {
                subject_id: t.id,
                category: t.category.clone(),
                action: t.action.clone().unwrap_or_default(),
                trajectory: serialize_trajectory(&clip.frames, std::slice::from_ref(t), None)?.text,
            })
        })
        .collect()
}

pub fn future_prompt(basis: &[FutureBasis]) -> String {
    let mut prompt = String::from(
        "You are given the trajectories of the subjects observed in a video clip, with boxes on a 0-1000 grid, \
         together with the action each subject performs.\nObserved subjects:\n",
    );
    for (i, b) in (1..).zip(basis) {
        prompt.push_str(&format!("- Id{i} ({}): {} | trajectory: {}\n", b.category, b.action, b.trajectory));
    }
    prompt.push_str(
        "Using only this information and common-sense knowledge of how such scenes unfold, formulate a question \
         about what will happen next and answer it. Reply with the answer only: one or two sentences describing \
         the most likely future actions or events, grounded in the trajectories above.",
    );
    prompt
}

pub fn prompt_hash(prompt: &str) -> String {
    let digest = Sha256::digest(prompt.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Asks the client for future-reasoning text grounded in the basis subjects.
pub fn compose_future(basis: &[FutureBasis], client: &dyn TextGenClient) -> Result<FutureObservation, BuildError> {
    if basis.is_empty() || basis.iter().any(|b| b.action.trim().is_empty()) {
        return Err(BuildError::InvalidBasis);
    }
    let prompt = future_prompt(basis);
    let text = client.generate(&prompt).map_err(|e| BuildError::TextGen {
        prompt_hash: prompt_hash(&prompt),
        message: e.message,
        retriable: e.retriable,
    })?;
    let text = text.trim().to_string();
    if text.is_empty() || text.contains("<Id") || text.contains("</Id") {
        return Err(BuildError::InvalidFuture);
    }
    Ok(FutureObservation { text, basis: basis.iter().map(|b| (b.subject_id, b.action.clone())).collect() })
}

/// Future-reasoning record: trajectories of the basis subjects first, then the future text.
pub fn build_fit_record(
    clip: &ClipSample,
    future: &FutureObservation,
    template: &TaskTemplate,
    cfg: &BuilderConfig,
    seed: u64,
    record_index: u64,
) -> Result<ConversationRecord, BuildError> {
    if clip.frames.len() < 2 {
        return Err(BuildError::Skip(SkipReason::FrameCount));
    }
    if future.text.trim().is_empty() || future.basis.is_empty() {
        return Err(BuildError::InvalidFuture);
    }
    let subject_id = future.basis[0].0;
    let subject = clip.tracklets.iter().find(|t| t.id == subject_id).ok_or(BuildError::Skip(SkipReason::NotQueryable))?;
    let q = query_subject(clip, &[subject], seed, record_index)?;
    let relevant: Vec<Tracklet> = future
        .basis
        .iter()
        .map(|(id, _)| clip.tracklets.iter().find(|t| t.id == *id).cloned().ok_or(BuildError::Skip(SkipReason::NotQueryable)))
        .collect::<Result<_, _>>()?;
    let prefix = cfg.category_prefix.then_some(subject.category.as_str());
    let traj = serialize_trajectory(&clip.frames, &relevant, prefix)?;
    let markers = render_frame_markers(&clip.frames)?;
    Ok(ConversationRecord {
        task: Task::Fit,
        variant: template.variant.clone(),
        frames: clip.frames.clone(),
        question: template.question(&markers, &q.text, seed, record_index),
        answer: format!("{} {}", traj.text, future.text),
        observation: Some(q.observation),
        future_text: Some(future.text.clone()),
        is_negative: false,
        seed_trace: record_seed(seed, record_index),
    })
}

/// Expression-to-trajectory (`grounding`) or box-to-expression (`region_caption`) record.
pub fn build_referring_record(
    rec: &ReferringRecord,
    template: &TaskTemplate,
    cfg: &BuilderConfig,
    seed: u64,
    record_index: u64,
) -> Result<ConversationRecord, BuildError> {
    let markers = render_frame_markers(&rec.frames)?;
    let target = rec.target_tracklet();
    let (query, answer) = match template.variant.as_str() {
        "region_caption" => {
            let frame = rec.frames.first().ok_or(BuildError::Skip(SkipReason::EmptyClip))?;
            if rec.frames.len() != 1 {
                return Err(BuildError::Skip(SkipReason::FrameCount));
            }
            (location_text(&target, frame)?, rec.expression.clone())
        }
        _ => {
            let prefix = cfg.category_prefix.then_some(target.category.as_str());
            (rec.expression.clone(), serialize_trajectory(&rec.frames, std::slice::from_ref(&target), prefix)?.text)
        }
    };
    Ok(ConversationRecord {
        task: Task::Referring,
        variant: template.variant.clone(),
        frames: rec.frames.clone(),
        question: template.question(&markers, &query, seed, record_index),
        answer,
        observation: None,
        future_text: None,
        is_negative: false,
        seed_trace: record_seed(seed, record_index),
    })
}

/// Pre-converted reasoning pair (question in `expression`, response in `answer`).
pub fn build_reasoning_record(
    rec: &ReferringRecord,
    template: &TaskTemplate,
    seed: u64,
    record_index: u64,
) -> Result<ConversationRecord, BuildError> {
    let answer = rec.answer.clone().filter(|a| !a.trim().is_empty()).ok_or(BuildError::Skip(SkipReason::EmptyCaption))?;
    let markers = render_frame_markers(&rec.frames)?;
    Ok(ConversationRecord {
        task: Task::Reasoning,
        variant: template.variant.clone(),
        frames: rec.frames.clone(),
        question: template.question(&markers, &rec.expression, seed, record_index),
        answer,
        observation: None,
        future_text: None,
        is_negative: false,
        seed_trace: record_seed(seed, record_index),
    })
}

/// Image-caption passthrough. Uses the template's first (fixed) pattern.
pub fn build_caption_record(image: &FrameRef, caption: &str, template: &TaskTemplate) -> Result<ConversationRecord, BuildError> {
    let caption = caption.trim();
    if caption.is_empty() {
        return Err(BuildError::Skip(SkipReason::EmptyCaption));
    }
    let frames = vec![FrameRef { index: 1, ..image.clone() }];
    let markers = render_frame_markers(&frames)?;
    Ok(ConversationRecord {
        task: Task::Caption,
        variant: template.variant.clone(),
        frames,
        question: fill_pattern(&template.question_patterns[0], &markers, "", &template.format_hint),
        answer: caption.to_string(),
        observation: None,
        future_text: None,
        is_negative: false,
        seed_trace: 0,
    })
}

/// Per-task count helper for callers assembling corpora.
pub fn count_by_task(records: &[ConversationRecord]) -> BTreeMap<Task, u64> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.task).or_default() += 1;
    }
    out
}
