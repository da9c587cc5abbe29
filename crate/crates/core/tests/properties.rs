use std::collections::BTreeMap;

use forge_core::eval::{eval_pope, eval_sot, success_rate, PopeRecord, PopeSplit, SotGroundTruth, SotPrediction, YesNo};
use forge_core::ingest::SourceSequence;
use forge_core::sampler::{filter_small, sample_clip, SamplerConfig};
use forge_core::trajgrammar::{parse_response, serialize_detection, serialize_trajectory, ParseMode};
use forge_core::{denormalize_box, iou, normalize_box, BoundingBox, ClipSample, FrameRef, NormBox, Tracklet};
use proptest::prelude::*;

fn dims() -> impl Strategy<Value = (u32, u32)> {
    (16u32..4000, 16u32..4000)
}

fn box_in(w: u32, h: u32) -> impl Strategy<Value = BoundingBox> {
    let (w, h) = (f64::from(w), f64::from(h));
    (0.0..w - 1.0, 0.0..h - 1.0, 0.0f64..1.0, 0.0f64..1.0).prop_map(move |(x0, y0, fx, fy)| {
        let x1 = x0 + 1.0 + fx * (w - x0 - 1.0);
        let y1 = y0 + 1.0 + fy * (h - y0 - 1.0);
        BoundingBox::new(x0, y0, x1, y1).unwrap()
    })
}

fn image_and_box() -> impl Strategy<Value = (u32, u32, BoundingBox)> {
    dims().prop_flat_map(|(w, h)| box_in(w, h).prop_map(move |b| (w, h, b)))
}

fn frames(k: u32, w: u32, h: u32) -> Vec<FrameRef> {
    (1..=k)
        .map(|i| FrameRef { index: i, source_frame_id: u64::from(i), image_path: format!("{i}.jpg"), width: w, height: h })
        .collect()
}

/// Clip of `k` frames with tracklets that each cover a nonempty frame subset.
fn clip_strategy() -> impl Strategy<Value = ClipSample> {
    (1u32..=5, dims()).prop_flat_map(|(k, (w, h))| {
        let track = (prop::collection::btree_set(1..=k, 1..=k as usize), prop::collection::vec(box_in(w, h), k as usize));
        prop::collection::vec(track, 1..6).prop_map(move |tracks| ClipSample {
            frames: frames(k, w, h),
            tracklets: tracks
                .into_iter()
                .zip(10u32..)
                .map(|((present, boxes), id)| Tracklet {
                    id,
                    category: "obj".into(),
                    appearance: None,
                    action: None,
                    boxes: present.into_iter().map(|f| (f, boxes[f as usize - 1])).collect(),
                })
                .collect(),
            source_dataset: "synthetic".into(),
            gap: 1,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn iou_symmetric_and_bounded(a in box_in(1000, 1000), b in box_in(1000, 1000)) {
        let ab = iou(&a, &b).unwrap();
        let ba = iou(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn iou_self_is_one(a in box_in(1000, 1000)) {
        prop_assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_monotone((w, h, a) in image_and_box(), shift in 0.0f64..1.0) {
        // moving the right edge outward never moves its normalized value inward
        let wider = BoundingBox::new(a.xmin, a.ymin, a.xmax + shift * (f64::from(w) - a.xmax), a.ymax).unwrap();
        let na = normalize_box(&a, w, h).unwrap();
        let nw = normalize_box(&wider, w, h).unwrap();
        prop_assert!(nw.xmax() >= na.xmax());
        prop_assert_eq!(nw.xmin(), na.xmin());
        prop_assert!(na.xmin() <= na.xmax() && na.ymin() <= na.ymax());
        prop_assert!(na.coords().iter().all(|c| *c <= 1000));
    }

    #[test]
    fn denormalize_inverts_within_half_cell((w, h, a) in image_and_box()) {
        let back = denormalize_box(&normalize_box(&a, w, h).unwrap(), w, h).unwrap();
        let (tx, ty) = (f64::from(w) / 2000.0 + 1e-9, f64::from(h) / 2000.0 + 1e-9);
        prop_assert!((back.xmin - a.xmin).abs() <= tx);
        prop_assert!((back.xmax - a.xmax).abs() <= tx);
        prop_assert!((back.ymin - a.ymin).abs() <= ty);
        prop_assert!((back.ymax - a.ymax).abs() <= ty);
    }

    #[test]
    fn trajectory_round_trip(clip in clip_strategy()) {
        let text = serialize_trajectory(&clip.frames, &clip.tracklets, None).unwrap();
        let parsed = parse_response(&text.text, ParseMode::Strict).unwrap();
        prop_assert_eq!(parsed.tracklets.len(), clip.tracklets.len());
        for (n, src) in text.ids.iter().zip(&text.source_ids) {
            let t = clip.tracklets.iter().find(|t| t.id == *src).unwrap();
            let p = parsed.track(*n).unwrap();
            let expected: BTreeMap<u32, NormBox> =
                t.boxes.iter().map(|(f, b)| (*f, normalize_box(b, clip.frames[0].width, clip.frames[0].height).unwrap())).collect();
            prop_assert_eq!(&p.boxes, &expected);
        }
        // Id blocks appear in first-appearance order
        let firsts: Vec<u32> = text.source_ids.iter().map(|s| clip.tracklets.iter().find(|t| t.id == *s).unwrap().first_frame().unwrap()).collect();
        prop_assert!(firsts.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(parse_response(&text.text, ParseMode::Lenient).unwrap(), parsed);
    }

    #[test]
    fn detection_round_trip(boxes in prop::collection::vec((0usize..3, box_in(640, 480)), 1..12)) {
        let names = ["person", "traffic light", "dog"];
        let objects: Vec<(&str, NormBox)> = boxes.iter().map(|(c, b)| (names[*c], normalize_box(b, 640, 480).unwrap())).collect();
        let text = serialize_detection(&objects).unwrap();
        let parsed = parse_response(&text, ParseMode::Strict).unwrap();
        let mut got: Vec<(String, [u16; 4])> = parsed.detections.iter().map(|(c, b)| (c.clone(), b.coords())).collect();
        let mut want: Vec<(String, [u16; 4])> = objects.iter().map(|(c, b)| (c.to_string(), b.coords())).collect();
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn lenient_never_fails(text in ".{0,200}") {
        prop_assert!(parse_response(&text, ParseMode::Lenient).is_ok());
    }

    #[test]
    fn lenient_never_fails_on_grammar_noise(text in "[<>/Id0-9Frame :\\[\\],;a-z]{0,300}") {
        let parsed = parse_response(&text, ParseMode::Lenient).unwrap();
        for t in &parsed.tracklets {
            prop_assert!(t.boxes.values().all(|b| b.coords().iter().all(|c| *c <= 1000)));
        }
    }

    #[test]
    fn filter_small_idempotent(clip in clip_strategy(), divisor in 1u32..64) {
        let cfg = SamplerConfig { min_size_divisor: divisor, ..SamplerConfig::default() };
        let (once, _) = filter_small(&clip, &cfg);
        let (twice, removed) = filter_small(&once, &cfg);
        prop_assert_eq!(removed, 0);
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn sampled_frames_are_evenly_spaced(n in 7u32..80, seed in any::<u64>(), idx in 0u64..10_000) {
        let seq = SourceSequence {
            dataset: "d".into(),
            name: "s".into(),
            frames: frames(n, 640, 480),
            tracklets: vec![],
            captions: vec![],
        };
        let cfg = SamplerConfig { seed, ..SamplerConfig::default() };
        let clip = sample_clip(&seq, &cfg, idx).unwrap();
        let src: Vec<u64> = clip.frames.iter().map(|f| f.source_frame_id).collect();
        prop_assert!(cfg.frame_counts.contains(&(src.len() as u32)));
        prop_assert!(cfg.gaps.contains(&clip.gap));
        prop_assert!(src.windows(2).all(|w| w[1] - w[0] == u64::from(clip.gap)));
        prop_assert!(src[0] >= 1 && *src.last().unwrap() <= u64::from(n));
        prop_assert!(clip.frames.iter().zip(1u32..).all(|(f, i)| f.index == i));
    }

    #[test]
    fn success_rate_non_increasing(ious in prop::collection::vec(0.0f64..=1.0, 1..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(success_rate(&ious, lo) >= success_rate(&ious, hi));
    }

    #[test]
    fn copied_ground_truth_scores_perfectly(boxes in prop::collection::vec(box_in(1280, 720), 1..30)) {
        let map: BTreeMap<u32, BoundingBox> = (1u32..).zip(boxes).collect();
        let gt = SotGroundTruth {
            sequence_id: "s".into(),
            width: 1280,
            height: 720,
            frame_count: map.len() as u32,
            category: None,
            boxes: map.clone(),
        };
        let r = eval_sot(&[SotPrediction { sequence_id: "s".into(), boxes: map }], &[gt]).unwrap();
        prop_assert_eq!(r.metric("ao"), Some(1.0));
        prop_assert_eq!(r.metric("sr_0.5"), Some(1.0));
        prop_assert_eq!(r.metric("precision"), Some(1.0));
        prop_assert_eq!(r.metric("norm_precision"), Some(1.0));
    }

    #[test]
    fn yes_rate_ignores_gold(pairs in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..100)) {
        let yn = |b: bool| if b { YesNo::Yes } else { YesNo::No };
        let rec = |i: usize, p: bool, g: bool| PopeRecord { question_id: i.to_string(), predicted: yn(p), gold: yn(g), split: PopeSplit::Popular };
        let a: Vec<_> = pairs.iter().enumerate().map(|(i, (p, g, _))| rec(i, *p, *g)).collect();
        let b: Vec<_> = pairs.iter().enumerate().map(|(i, (p, _, g2))| rec(i, *p, *g2)).collect();
        let ra = eval_pope(&a).unwrap();
        let rb = eval_pope(&b).unwrap();
        prop_assert_eq!(ra.metric("popular/yes_rate"), rb.metric("popular/yes_rate"));
        let expected = pairs.iter().filter(|(p, _, _)| *p).count() as f64 / pairs.len() as f64;
        prop_assert!((ra.metric("popular/yes_rate").unwrap() - expected).abs() < 1e-12);
    }
}
