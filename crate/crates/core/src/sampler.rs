//! Clip sampling and preprocessing filters.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{index, IndexedRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::SourceSequence;
use crate::model::{ClipSample, FrameRef};
use crate::seeding::{record_rng, Purpose};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SamplerError {
    #[error("sequence {name} has {frames} frames; at least {needed} are needed for any clip")]
    Infeasible { name: String, frames: usize, needed: usize },
    #[error("invalid sampler config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub frame_counts: BTreeSet<u32>,
    pub gaps: BTreeSet<u32>,
    pub min_size_divisor: u32,
    pub max_categories: usize,
    /// Clips drawn from each multi-frame source sequence.
    pub clips_per_sequence: u32,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            frame_counts: BTreeSet::from([3, 4, 5]),
            gaps: BTreeSet::from([3, 4, 5]),
            min_size_divisor: 32,
            max_categories: 15,
            clips_per_sequence: 1,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::Config(m.to_string()));
        if self.frame_counts.is_empty() || self.frame_counts.contains(&0) {
            return bad("frame_counts must be a nonempty set of positive integers");
        }
        if self.gaps.is_empty() || self.gaps.contains(&0) {
            return bad("gaps must be a nonempty set of positive integers");
        }
        if self.min_size_divisor < 1 {
            return bad("min_size_divisor must be >= 1");
        }
        if self.max_categories < 1 {
            return bad("max_categories must be >= 1");
        }
        Ok(())
    }

    pub fn max_frames(&self) -> usize {
        self.frame_counts.iter().max().copied().unwrap_or(1) as usize
    }

    pub fn gap_list(&self) -> Vec<u32> {
        self.gaps.iter().copied().collect()
    }
}

fn span(k: u32, g: u32) -> u64 {
    1 + u64::from(k - 1) * u64::from(g)
}

/// Draws a clip of `k` frames spaced `g` source frames apart.
///
/// `k` and `g` are drawn uniformly from the configured sets. If the draw does
/// not fit, it falls back to the largest fitting gap `<= g`, then the largest
/// fitting count `<= k`.
pub fn sample_clip(seq: &SourceSequence, cfg: &SamplerConfig, record_index: u64) -> Result<ClipSample, SamplerError> {
    cfg.validate()?;
    let n = seq.frames.len() as u64;
    let counts: Vec<u32> = cfg.frame_counts.iter().copied().collect();
    let gaps = cfg.gap_list();
    let min_span = span(counts[0], gaps[0]);
    if n < min_span {
        return Err(SamplerError::Infeasible { name: seq.name.clone(), frames: seq.frames.len(), needed: min_span as usize });
    }

    let mut rng = record_rng(cfg.seed, record_index, Purpose::SampleClip);
    let k0 = *counts.choose(&mut rng).expect("nonempty");
    let g0 = *gaps.choose(&mut rng).expect("nonempty");
    let (k, g) = gaps
        .iter()
        .rev()
        .filter(|g| **g <= g0)
        .find_map(|g| counts.iter().rev().find(|k| **k <= k0 && span(**k, *g) <= n).map(|k| (*k, *g)))
        .expect("minimum span fits");
    let last_start = n - span(k, g) + 1;
    let start = rng.random_range(1..=last_start) as u32;

    let picked: Vec<u32> = (0..k).map(|i| start + i * g).collect();
    let remap: BTreeMap<u32, u32> = picked.iter().zip(1u32..).map(|(s, c)| (*s, c)).collect();
    let frames = picked
        .iter()
        .zip(1u32..)
        .map(|(src, idx)| {
            let f = &seq.frames[*src as usize - 1];
            FrameRef { index: idx, ..f.clone() }
        })
        .collect();
    let tracklets = seq
        .tracklets
        .iter()
        .filter_map(|t| {
            let boxes: BTreeMap<_, _> =
                t.boxes.iter().filter_map(|(f, b)| remap.get(f).map(|c| (*c, *b))).collect();
            (!boxes.is_empty()).then(|| crate::model::Tracklet { boxes, ..t.clone() })
        })
        .collect();
    Ok(ClipSample { frames, tracklets, source_dataset: seq.dataset.clone(), gap: g })
}

/// Wraps a single-frame sequence (an image) as a clip.
pub fn single_frame_clip(seq: &SourceSequence) -> ClipSample {
    ClipSample {
        frames: seq.frames.iter().take(1).cloned().collect(),
        tracklets: seq.tracklets.clone(),
        source_dataset: seq.dataset.clone(),
        gap: 1,
    }
}

/// Removes every tracklet with any box narrower than `W/divisor` or shorter
/// than `H/divisor` (dimensions of the box's own frame). Returns the number removed.
pub fn filter_small(clip: &ClipSample, cfg: &SamplerConfig) -> (ClipSample, usize) {
    let divisor = f64::from(cfg.min_size_divisor.max(1));
    let dims: BTreeMap<u32, (f64, f64)> =
        clip.frames.iter().map(|f| (f.index, (f64::from(f.width), f64::from(f.height)))).collect();
    let keep = |t: &&crate::model::Tracklet| {
        t.boxes.iter().all(|(idx, b)| match dims.get(idx) {
            Some((w, h)) => b.width() >= w / divisor && b.height() >= h / divisor,
            None => false,
        })
    };
    let tracklets: Vec<_> = clip.tracklets.iter().filter(keep).cloned().collect();
    let removed = clip.tracklets.len() - tracklets.len();
    (ClipSample { tracklets, ..clip.clone() }, removed)
}

/// Keeps at most `max_categories` categories, chosen uniformly at random per record.
/// Returns the number of tracklets dropped.
pub fn cap_categories(clip: &ClipSample, cfg: &SamplerConfig, record_index: u64) -> (ClipSample, usize) {
    let categories: Vec<&str> = clip
        .tracklets
        .iter()
        .map(|t| t.category.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if categories.len() <= cfg.max_categories {
        return (clip.clone(), 0);
    }
    let mut rng = record_rng(cfg.seed, record_index, Purpose::CapCategories);
    let chosen: BTreeSet<&str> =
        index::sample(&mut rng, categories.len(), cfg.max_categories).into_iter().map(|i| categories[i]).collect();
    let tracklets: Vec<_> = clip.tracklets.iter().filter(|t| chosen.contains(t.category.as_str())).cloned().collect();
    let dropped = clip.tracklets.len() - tracklets.len();
    (ClipSample { tracklets, ..clip.clone() }, dropped)
}
