#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const MOT_SEQUENCES: u32 = 10;
pub const MOT_FRAMES: u32 = 60;
pub const COCO_IMAGES: u32 = 200;
pub const REFERRING_ROWS: u32 = 100;
pub const REASONING_ROWS: u32 = 50;

/// Small deterministic generator so fixtures need no RNG dependency.
struct Lcg(u64);

impl Lcg {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    fn range(&mut self, lo: u32, hi: u32) -> u32 {
        lo + (self.next() % u64::from(hi - lo + 1)) as u32
    }
}

const ACTIONS: [&str; 4] = ["walking to the left", "running toward the camera", "standing still", "crossing the street"];

fn write(path: &Path, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(path, text).unwrap();
}

/// MOT split with `MOT_SEQUENCES` sequences. With `actions`, every sequence
/// gets an `attributes.json` describing its pedestrians.
pub fn write_mot(root: &Path, actions: bool) -> PathBuf {
    let split = root.join("mot/train");
    let mut rng = Lcg(17);
    for s in 1..=MOT_SEQUENCES {
        let seq = split.join(format!("SEQ-{s:02}"));
        write(
            &seq.join("seqinfo.ini"),
            &format!("[Sequence]\nname=SEQ-{s:02}\nimDir=img1\nframeRate=30\nseqLength={MOT_FRAMES}\nimWidth=640\nimHeight=480\nimExt=.jpg\n"),
        );
        let mut gt = String::new();
        for id in 1..=4u32 {
            let (x0, y0) = (rng.range(0, 400), rng.range(0, 200));
            let start = if id == 3 { 10 } else { 1 };
            for f in start..=MOT_FRAMES {
                let (w, h) = if id == 4 { (12, 12) } else { (60 + id * 10, 120) };
                let flag = if id == 2 && f % 17 == 0 { 0 } else { 1 };
                let class = if id == 2 { 3 } else { 1 };
                writeln!(gt, "{f},{id},{},{y0},{w},{h},{flag},{class},1.0", x0 + f * 2).unwrap();
            }
        }
        write(&seq.join("gt/gt.txt"), &gt);
        if actions {
            let attrs = serde_json::json!({
                "1": {"action": ACTIONS[(s % 4) as usize], "appearance": "in a red jacket"},
                "3": {"action": ACTIONS[((s + 1) % 4) as usize]},
            });
            write(&seq.join("gt/attributes.json"), &attrs.to_string());
        }
    }
    split
}

pub fn write_coco(root: &Path) -> PathBuf {
    let mut rng = Lcg(5);
    let cats = [(1, "person"), (3, "car"), (18, "dog")];
    let mut images = Vec::new();
    let mut anns = Vec::new();
    let mut ann_id = 1;
    for i in 1..=COCO_IMAGES {
        images.push(serde_json::json!({"id": i, "file_name": format!("{i:012}.jpg"), "width": 640, "height": 480}));
        for _ in 0..rng.range(1, 4) {
            let (cid, _) = cats[rng.range(0, 2) as usize];
            let (x, y) = (rng.range(0, 500), rng.range(0, 350));
            let (w, h) = (rng.range(25, 130), rng.range(20, 120));
            anns.push(serde_json::json!({"id": ann_id, "image_id": i, "category_id": cid, "bbox": [x, y, w, h], "iscrowd": 0}));
            ann_id += 1;
        }
        if i % 3 == 0 {
            anns.push(serde_json::json!({"id": ann_id, "image_id": i, "caption": format!("A street scene number {i}.")}));
            ann_id += 1;
        }
    }
    let categories: Vec<_> = cats.iter().map(|(id, n)| serde_json::json!({"id": id, "name": n})).collect();
    let path = root.join("coco/instances.json");
    write(&path, &serde_json::json!({"images": images, "annotations": anns, "categories": categories}).to_string());
    path
}

pub fn write_referring(root: &Path) -> PathBuf {
    let mut text = String::new();
    for i in 0..REFERRING_ROWS {
        let line = if i % 2 == 0 {
            serde_json::json!({
                "expression": format!("the person holding item {i}"),
                "width": 640, "height": 480,
                "image_path": format!("ref/{i}.jpg"),
                "boxes": {"1": [10 + i, 20, 120 + i, 300]},
                "category": "person",
            })
        } else {
            serde_json::json!({
                "expression": format!("the dog that runs away {i}"),
                "width": 640, "height": 480,
                "image_path": [format!("ref/{i}_a.jpg"), format!("ref/{i}_b.jpg"), format!("ref/{i}_c.jpg")],
                "boxes": {"1": [100, 100, 200, 200], "2": [120, 100, 220, 200], "3": [140, 100, 240, 200]},
                "category": "dog",
                "action": "running away",
            })
        };
        text.push_str(&line.to_string());
        text.push('\n');
    }
    let path = root.join("referring/refs.jsonl");
    write(&path, &text);
    path
}

pub fn write_reasoning(root: &Path) -> PathBuf {
    let mut text = String::new();
    for i in 0..REASONING_ROWS {
        let line = serde_json::json!({
            "expression": format!("Why is the person at [100,100,300,400] waving {i}?"),
            "answer": "They are greeting a friend across the street.",
            "width": 640, "height": 480,
            "image_path": format!("vcr/{i}.jpg"),
            "boxes": {"1": [64, 48, 192, 192]},
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    let path = root.join("vcr/qa.jsonl");
    write(&path, &text);
    path
}

pub fn write_sot(root: &Path) -> (PathBuf, PathBuf) {
    let dir = root.join("got10k/GOT-10k_Train_000001");
    let mut gt = String::new();
    for f in 1..=30u32 {
        write(&dir.join(format!("{f:08}.jpg")), "");
        writeln!(gt, "{},{},{},{}", 100 + f, 80, 90, 70).unwrap();
    }
    write(&dir.join("groundtruth.txt"), &gt);
    (dir.join("groundtruth.txt"), dir)
}

pub struct Fixture {
    pub root: PathBuf,
    pub config: PathBuf,
    pub out: PathBuf,
}

/// Writes every source plus a TOML config. `extra` is appended to the config.
pub fn fixture(root: &Path, actions: bool, extra: &str) -> Fixture {
    let mot = write_mot(root, actions);
    let coco = write_coco(root);
    let refs = write_referring(root);
    let vcr = write_reasoning(root);
    let (sot_gt, sot_dir) = write_sot(root);
    let out = root.join("out");
    let config = root.join("forge.toml");
    let text = format!(
        r#"[[sources]]
dataset = "coco"
format = "coco"
path = "{coco}"

[[sources]]
dataset = "mot17"
format = "mot"
path = "{mot}"

[[sources]]
dataset = "refcoco"
format = "referring"
path = "{refs}"

[[sources]]
dataset = "vcr"
format = "reasoning"
path = "{vcr}"

[[sources]]
dataset = "got10k"
format = "sot"
path = "{sot_gt}"
image_dir = "{sot_dir}"
width = 640
height = 480
category = "bird"

[sampler]
clips_per_sequence = 80

[output]
directory = "{out}"
shard_size = 400
{extra}"#,
        coco = coco.display(),
        mot = mot.display(),
        refs = refs.display(),
        vcr = vcr.display(),
        sot_gt = sot_gt.display(),
        sot_dir = sot_dir.display(),
        out = out.display(),
    );
    write(&config, &text);
    Fixture { root: root.to_path_buf(), config, out }
}

pub fn forge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forge")).args(args).output().expect("forge runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
