//! `forge ingest`: source annotations to the canonical store.

use std::path::{Path, PathBuf};
use std::time::Instant;

use forge_core::ingest::{
    apply_track_attributes, ingest_coco_detection, ingest_mot_challenge, ingest_referring, ingest_sot_sequence,
    load_track_attributes, CanonicalItem, IngestStats, SeqInfo, SotSequenceSpec, SourceSequence,
};

use crate::config::{ForgeConfig, SourceConfig, SourceFormat};
use crate::error::{CliError, CliResult};
use crate::manifest::{digest_path, RunManifest, StageCounters};
use crate::store::{ensure_dir, jsonl_files, write_jsonl, CANONICAL_DIR, MANIFEST};

fn adapter_err(e: impl std::fmt::Display) -> CliError {
    CliError::input(e)
}

/// `gt.txt` files of a MOT source: the file itself, or `*/gt/gt.txt` of a split directory.
fn mot_ground_truths(src: &SourceConfig) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    if src.path.is_file() {
        let seqinfo = match &src.seqinfo {
            Some(p) => p.clone(),
            None => src.path.parent().and_then(Path::parent).unwrap_or(Path::new(".")).join("seqinfo.ini"),
        };
        return Ok(vec![(src.path.clone(), seqinfo)]);
    }
    let entries = std::fs::read_dir(&src.path).map_err(|e| CliError::input(format!("{}: {e}", src.path.display())))?;
    let mut seqs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join("gt/gt.txt").is_file()).collect();
    seqs.sort();
    if seqs.is_empty() {
        return Err(CliError::input(format!("{}: no */gt/gt.txt sequences found", src.path.display())));
    }
    Ok(seqs.into_iter().map(|s| (s.join("gt/gt.txt"), s.join("seqinfo.ini"))).collect())
}

/// The attributes file for a ground-truth file: the configured one, else an
/// existing `attributes.json` in the same directory.
fn attributes_for(gt: &Path, configured: Option<&Path>) -> Option<PathBuf> {
    configured.map(Path::to_path_buf).or_else(|| {
        let sibling = gt.parent().unwrap_or(Path::new(".")).join("attributes.json");
        sibling.is_file().then_some(sibling)
    })
}

fn attach_attributes(seq: &mut SourceSequence, path: Option<PathBuf>, warnings: &mut Vec<String>) -> CliResult<()> {
    if let Some(path) = path {
        let attrs = load_track_attributes(&path).map_err(adapter_err)?;
        let unmatched = apply_track_attributes(seq, &attrs);
        if !unmatched.is_empty() {
            warnings.push(format!("{}: attributes for unknown track ids {unmatched:?}", path.display()));
        }
    }
    Ok(())
}

/// Runs one source's adapter. Hard adapter errors abort with the offending path/line.
pub fn ingest_source(src: &SourceConfig) -> CliResult<(Vec<CanonicalItem>, IngestStats, Vec<String>)> {
    if !src.path.exists() {
        return Err(CliError::input(format!("{}: no such file or directory", src.path.display())));
    }
    let mut extra = Vec::new();
    let (items, stats) = match src.format {
        SourceFormat::Coco => {
            let (seqs, stats) = ingest_coco_detection(&src.path, &src.dataset).map_err(adapter_err)?;
            (seqs.into_iter().map(CanonicalItem::Sequence).collect(), stats)
        }
        SourceFormat::Mot => {
            let mut stats = IngestStats::default();
            let mut items = Vec::new();
            let single = src.path.is_file();
            for (gt, seqinfo) in mot_ground_truths(src)? {
                let mut info = SeqInfo::load(&seqinfo).map_err(adapter_err)?;
                if info.name.is_empty() {
                    info.name = seqinfo.parent().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                }
                let (mut seq, s) = ingest_mot_challenge(&gt, &info, &src.dataset).map_err(adapter_err)?;
                let configured = if single { src.attributes.as_deref() } else { None };
                attach_attributes(&mut seq, attributes_for(&gt, configured), &mut extra)?;
                stats.merge(&s);
                items.push(CanonicalItem::Sequence(seq));
            }
            (items, stats)
        }
        SourceFormat::Sot => {
            let name = src.name.clone().unwrap_or_else(|| {
                src.path.parent().and_then(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
            });
            let spec = SotSequenceSpec {
                dataset: src.dataset.clone(),
                name,
                width: src.width.unwrap_or(0),
                height: src.height.unwrap_or(0),
                category: src.category.clone().unwrap_or_else(|| "object".into()),
            };
            let image_dir = src.image_dir.as_deref().unwrap_or(Path::new(""));
            let (mut seq, stats) = ingest_sot_sequence(&src.path, image_dir, &spec).map_err(adapter_err)?;
            attach_attributes(&mut seq, attributes_for(&src.path, src.attributes.as_deref()), &mut extra)?;
            (vec![CanonicalItem::Sequence(seq)], stats)
        }
        SourceFormat::Referring | SourceFormat::Reasoning => {
            let (recs, mut stats) = ingest_referring(&src.path, &src.dataset).map_err(adapter_err)?;
            let reasoning = src.format == SourceFormat::Reasoning;
            let mut items = Vec::with_capacity(recs.len());
            let mut unanswered = 0;
            for mut r in recs {
                if reasoning {
                    if r.answer.as_deref().is_none_or(|a| a.trim().is_empty()) {
                        unanswered += 1;
                        continue;
                    }
                } else {
                    r.answer = None;
                }
                items.push(CanonicalItem::Referring(r));
            }
            if unanswered > 0 {
                *stats.dropped.entry(forge_core::ingest::DropReason::MissingTarget).or_default() += unanswered;
                stats.emitted -= unanswered;
                extra.push(format!("{}: {unanswered} reasoning rows without an answer dropped", src.dataset));
            }
            (items, stats)
        }
    };
    if stats.warnings > 0 {
        extra.push(format!("{}: {} images without usable dimensions skipped", src.dataset, stats.warnings));
    }
    Ok((items, stats, extra))
}

fn sanitize(tag: &str) -> String {
    tag.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

pub fn source_inputs(src: &SourceConfig) -> Vec<PathBuf> {
    let mut paths = vec![src.path.clone()];
    paths.extend(src.seqinfo.clone());
    paths.extend(src.image_dir.clone());
    paths.extend(src.attributes.clone());
    paths
}

/// Writes one canonical shard per source plus `canonical/manifest.json`.
pub fn cmd_ingest(cfg: &ForgeConfig, out: &Path) -> CliResult<RunManifest> {
    if cfg.sources.is_empty() {
        return Err(CliError::input("config lists no sources"));
    }
    let dir = out.join(CANONICAL_DIR);
    ensure_dir(&dir)?;
    for stale in jsonl_files(&dir)? {
        std::fs::remove_file(&stale).map_err(|e| CliError::input(format!("{}: {e}", stale.display())))?;
    }
    let mut manifest = RunManifest::new("ingest", cfg.digest());
    for (i, src) in cfg.sources.iter().enumerate() {
        let started = Instant::now();
        let (items, stats, warnings) = ingest_source(src)?;
        for p in source_inputs(src) {
            manifest.input_digests.insert(p.display().to_string(), digest_path(&p)?);
        }
        let mut stage = StageCounters::new(format!("ingest:{}", src.dataset));
        stage.attempted = stats.input_rows;
        stage.emitted = stats.emitted;
        for (reason, n) in &stats.dropped {
            stage.dropped.insert(reason.as_str().to_string(), *n);
        }
        let shard = write_jsonl(&dir, &format!("{i:03}-{}.jsonl", sanitize(&src.dataset)), &items)?;
        log::info!("{}: {} items, {} boxes kept, {} dropped", src.dataset, items.len(), stats.emitted, stats.dropped_total());
        stage.finish(started);
        manifest.stages.push(stage);
        manifest.shards.push(shard);
        manifest.warnings.extend(warnings);
    }
    debug_assert!(manifest.counters_consistent());
    manifest.write(&dir.join(MANIFEST))?;
    Ok(manifest)
}
