//! `forge build`: canonical store to conversation corpus.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use forge_core::convbuilder::{
    build_caption_record, build_fit_record, build_fpt_record, build_reasoning_record, build_referring_record,
    compose_future, inject_negative, plan_future_basis, BuildError, BuilderConfig, Capability, TemplateCatalog,
    TextGenClient,
};
use forge_core::ingest::{CanonicalItem, ReferringRecord, ReferringTarget, SourceSequence};
use forge_core::sampler::{cap_categories, filter_small, sample_clip, single_frame_clip, SamplerConfig};
use forge_core::seeding::{record_rng, Purpose};
use forge_core::{ClipSample, ConversationRecord, Task};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rayon::prelude::*;

use crate::config::{BuildSection, ForgeConfig};
use crate::corpus::CorpusRecord;
use crate::error::{CliError, CliResult};
use crate::manifest::{digest_path, RunManifest, StageCounters};
use crate::store::{read_canonical, write_shards, CANONICAL_DIR, CORPUS_DIR, MANIFEST};
use crate::textgen::make_client;

/// One unit of work: a canonical item and the record index it is built under.
struct Unit<'a> {
    index: u64,
    item: &'a CanonicalItem,
}

struct Context<'a> {
    seed: u64,
    sampler: SamplerConfig,
    builder: BuilderConfig,
    section: &'a BuildSection,
    catalog: TemplateCatalog,
    client: Box<dyn TextGenClient>,
}

enum Outcome {
    Record(Box<CorpusRecord>),
    /// Dropped before a task was chosen.
    NoClip(&'static str),
    /// Dropped while building the chosen task.
    Skipped { task: Task, reason: String, warning: Option<String> },
}

enum Prepared<'a> {
    Clip { seq: &'a SourceSequence, clip: ClipSample },
    Referring(&'a ReferringRecord),
}

fn applicable(prepared: &Prepared<'_>, section: &BuildSection) -> Vec<Task> {
    let tasks: Vec<Task> = match prepared {
        Prepared::Clip { seq, clip } if clip.frames.len() == 1 => {
            let mut t = Vec::new();
            if !clip.tracklets.is_empty() {
                t.push(Task::Detection);
            }
            if !seq.captions.is_empty() {
                t.push(Task::Caption);
            }
            t
        }
        Prepared::Clip { clip, .. } => {
            let mut t = Vec::new();
            if !clip.tracklets.is_empty() {
                t.push(Task::Tracking);
            }
            if clip.tracklets.iter().any(|t| t.action.as_deref().is_some_and(|a| !a.trim().is_empty())) {
                t.push(Task::Fit);
            }
            t
        }
        Prepared::Referring(r) if r.answer.is_some() => vec![Task::Reasoning],
        Prepared::Referring(_) => vec![Task::Referring],
    };
    tasks.into_iter().filter(|t| section.weight(*t) > 0.0).collect()
}

fn prepare<'a>(ctx: &Context<'_>, unit: &Unit<'a>) -> Result<Prepared<'a>, &'static str> {
    match unit.item {
        CanonicalItem::Referring(r) => Ok(Prepared::Referring(r)),
        CanonicalItem::Sequence(seq) => {
            let clip = if seq.frames.len() > 1 {
                sample_clip(seq, &ctx.sampler, unit.index).map_err(|_| "infeasible")?
            } else if seq.frames.len() == 1 {
                single_frame_clip(seq)
            } else {
                return Err("no_frames");
            };
            let (clip, _) = filter_small(&clip, &ctx.sampler);
            let (clip, _) = cap_categories(&clip, &ctx.sampler, unit.index);
            if clip.tracklets.is_empty() && seq.captions.is_empty() {
                return Err("empty_after_filter");
            }
            Ok(Prepared::Clip { seq, clip })
        }
    }
}

fn build_task(ctx: &Context<'_>, prepared: &Prepared<'_>, task: Task, idx: u64) -> Result<ConversationRecord, BuildError> {
    let (seed, cfg, cat) = (ctx.seed, &ctx.builder, &ctx.catalog);
    match prepared {
        Prepared::Clip { seq, clip } => match task {
            Task::Detection | Task::Tracking => {
                let template = cat.default_for(task)?;
                if let Some(neg) = inject_negative(clip, template, cfg, seed, idx)? {
                    return Ok(neg);
                }
                build_fpt_record(clip, template, cfg, seed, idx)
            }
            Task::Fit => {
                let basis = plan_future_basis(clip, seed, idx)?;
                let future = compose_future(&basis, ctx.client.as_ref())?;
                build_fit_record(clip, &future, cat.default_for(task)?, cfg, seed, idx)
            }
            Task::Caption => {
                let mut rng = record_rng(seed, idx, Purpose::Variant);
                let caption = seq.captions.choose(&mut rng).map(String::as_str).unwrap_or("");
                let mut rec = build_caption_record(&clip.frames[0], caption, cat.default_for(task)?)?;
                rec.seed_trace = forge_core::seeding::record_seed(seed, idx);
                Ok(rec)
            }
            _ => Err(BuildError::MissingTemplate { task, variant: "default".into() }),
        },
        Prepared::Referring(r) => match task {
            Task::Reasoning => build_reasoning_record(r, cat.default_for(task)?, seed, idx),
            _ => {
                let single_box = r.frames.len() == 1 && matches!(r.target, ReferringTarget::Box { .. });
                let variants: &[&str] = if single_box { &["grounding", "region_caption"] } else { &["grounding"] };
                let mut rng = record_rng(seed, idx, Purpose::Variant);
                let variant = variants.choose(&mut rng).expect("nonempty");
                build_referring_record(r, cat.get(Task::Referring, variant)?, cfg, seed, idx)
            }
        },
    }
}

fn source_of(item: &CanonicalItem) -> (&str, String) {
    match item {
        CanonicalItem::Sequence(s) => (&s.dataset, s.name.clone()),
        CanonicalItem::Referring(r) => (&r.dataset, r.frames.first().map(|f| f.image_path.clone()).unwrap_or_default()),
    }
}

fn build_unit(ctx: &Context<'_>, unit: &Unit<'_>) -> Outcome {
    let prepared = match prepare(ctx, unit) {
        Ok(p) => p,
        Err(reason) => return Outcome::NoClip(reason),
    };
    let tasks = applicable(&prepared, ctx.section);
    if tasks.is_empty() {
        return Outcome::NoClip("no_applicable_task");
    }
    let weights: Vec<f64> = tasks.iter().map(|t| ctx.section.weight(*t)).collect();
    let mut rng = record_rng(ctx.seed, unit.index, Purpose::TaskChoice);
    let task = tasks[WeightedIndex::new(&weights).expect("positive weights").sample(&mut rng)];
    match build_task(ctx, &prepared, task, unit.index) {
        Ok(rec) => {
            let (dataset, source) = source_of(unit.item);
            let id = format!("{:016x}-{:08}", ctx.seed, unit.index);
            Outcome::Record(Box::new(CorpusRecord::new(id, rec, dataset, &source)))
        }
        Err(e) => {
            let reason = match &e {
                BuildError::Skip(r) => r.as_str().to_string(),
                BuildError::TextGen { .. } => "textgen_failed".into(),
                BuildError::InvalidFuture => "invalid_future".into(),
                BuildError::Grammar(_) => "grammar".into(),
                _ => "error".into(),
            };
            let warning = e.skip_reason().is_none().then(|| format!("record {}: {e}", unit.index));
            Outcome::Skipped { task, reason, warning }
        }
    }
}

/// Expands canonical items into units in store order.
fn units(items: &[CanonicalItem], per_sequence: u32) -> Vec<Unit<'_>> {
    let mut out = Vec::new();
    for item in items {
        let copies = match item {
            CanonicalItem::Sequence(s) if s.frames.len() > 1 => per_sequence.max(1),
            _ => 1,
        };
        for _ in 0..copies {
            out.push(Unit { index: out.len() as u64, item });
        }
    }
    out
}

pub struct BuildSummary {
    pub manifest: RunManifest,
    pub records: Vec<CorpusRecord>,
}

/// Builds the corpus from `out/canonical` into `out/corpus`. Output depends
/// only on the store, the config and `seed`; `workers` sets parallelism.
pub fn cmd_build(cfg: &ForgeConfig, out: &Path, seed: u64, workers: usize) -> CliResult<BuildSummary> {
    let canonical = out.join(CANONICAL_DIR);
    let items = read_canonical(&canonical)?;
    let mut sampler = cfg.sampler.clone();
    sampler.seed = seed;
    let ctx = Context {
        seed,
        sampler,
        builder: cfg.builder.builder_config(),
        section: &cfg.builder,
        catalog: cfg.builder.catalog()?,
        client: make_client(&cfg.builder.textgen)?,
    };

    let mut manifest = RunManifest::new("build", cfg.digest());
    manifest.seed = Some(seed);
    manifest.input_digests.insert(canonical.display().to_string(), digest_path(&canonical)?);
    if let Some(p) = &cfg.builder.template_catalog {
        manifest.input_digests.insert(p.display().to_string(), digest_path(p)?);
    }
    if ctx.client.capability() == Capability::External {
        manifest.warnings.push("fit text comes from an external generator and is not reproducible across runs".into());
    }

    let started = Instant::now();
    let units = units(&items, cfg.sampler.clips_per_sequence);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    let outcomes: Vec<Outcome> = pool.install(|| units.par_iter().map(|u| build_unit(&ctx, u)).collect());

    let mut clip_stage = StageCounters::new("clip");
    let mut build_stage = StageCounters::new("build");
    let mut records = Vec::new();
    let mut attempted_by_task: BTreeMap<Task, u64> = BTreeMap::new();
    for o in outcomes {
        clip_stage.attempted += 1;
        match o {
            Outcome::NoClip(reason) => clip_stage.drop(reason),
            Outcome::Skipped { task, reason, warning } => {
                clip_stage.emitted += 1;
                build_stage.attempted += 1;
                build_stage.drop(&format!("{task}:{reason}"));
                *attempted_by_task.entry(task).or_default() += 1;
                manifest.warnings.extend(warning);
            }
            Outcome::Record(r) => {
                clip_stage.emitted += 1;
                build_stage.attempted += 1;
                build_stage.emitted += 1;
                *attempted_by_task.entry(r.task).or_default() += 1;
                records.push(*r);
            }
        }
    }
    clip_stage.finish(started);
    build_stage.finish(started);

    for task in Task::ALL {
        let n = records.iter().filter(|r| r.task == task).count() as u64;
        manifest.task_counts.insert(task.as_str().into(), n);
        let negatives = records.iter().filter(|r| r.task == task && r.meta.is_negative).count() as u64;
        if negatives > 0 {
            manifest.task_counts.insert(format!("{task}:negative"), negatives);
        }
        if cfg.builder.weight(task) > 0.0 && n == 0 {
            let why = if task == Task::Fit && !attempted_by_task.contains_key(&Task::Fit) {
                "no source tracklet carries an action annotation"
            } else {
                "no unit supported it"
            };
            manifest.warnings.push(format!("task {task} has weight > 0 but produced 0 records: {why}"));
        }
    }
    manifest.stages = vec![clip_stage, build_stage];

    let corpus_dir = out.join(CORPUS_DIR);
    manifest.shards = write_shards(&corpus_dir, &records, cfg.output.shard_size)?;
    manifest.write(&corpus_dir.join(MANIFEST))?;
    for w in &manifest.warnings {
        log::warn!("{w}");
    }
    if records.is_empty() {
        return Err(CliError::empty(format!("empty corpus: no records survived ({} units)", units.len())));
    }
    Ok(BuildSummary { manifest, records })
}
