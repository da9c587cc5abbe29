//! Declarative run configuration, read from TOML or JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use forge_core::convbuilder::{BuilderConfig, TemplateCatalog};
use forge_core::sampler::SamplerConfig;
use forge_core::Task;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    /// COCO detection / caption JSON
    Coco,
    /// MOTChallenge `gt.txt` with a `seqinfo.ini`
    Mot,
    /// Single-object `groundtruth.txt` with an image directory
    Sot,
    /// Referring-expression JSONL
    Referring,
    /// Question/answer JSONL in the referring layout, with `answer` set
    Reasoning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub dataset: String,
    pub format: SourceFormat,
    pub path: PathBuf,
    /// MOT: defaults to `seqinfo.ini` two levels above `gt/gt.txt`.
    #[serde(default)]
    pub seqinfo: Option<PathBuf>,
    /// SOT: frame images.
    #[serde(default)]
    pub image_dir: Option<PathBuf>,
    #[serde(default)]
    pub width: Option<u32>,
    #[serde(default)]
    pub height: Option<u32>,
    #[serde(default)]
    pub category: Option<String>,
    /// SOT: sequence name, else the parent directory name.
    #[serde(default)]
    pub name: Option<String>,
    /// MOT/SOT: per-track appearance/action JSON. Defaults to an
    /// `attributes.json` beside the ground-truth file when one exists.
    #[serde(default)]
    pub attributes: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextGenKind {
    #[default]
    Template,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextGenConfig {
    pub kind: TextGenKind,
    /// Chat-completions endpoint for `http`.
    pub url: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for TextGenConfig {
    fn default() -> Self {
        Self { kind: TextGenKind::Template, url: None, model: None, timeout_secs: 60, max_retries: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildSection {
    pub negative_ratio: f64,
    pub distractors: Option<Vec<String>>,
    pub category_prefix: bool,
    pub template_catalog: Option<PathBuf>,
    pub task_weights: BTreeMap<Task, f64>,
    pub textgen: TextGenConfig,
}

impl Default for BuildSection {
    fn default() -> Self {
        Self {
            negative_ratio: BuilderConfig::default().negative_ratio,
            distractors: None,
            category_prefix: false,
            template_catalog: None,
            task_weights: Task::ALL.iter().map(|t| (*t, 1.0)).collect(),
            textgen: TextGenConfig::default(),
        }
    }
}

impl BuildSection {
    pub fn builder_config(&self) -> BuilderConfig {
        let base = BuilderConfig::default();
        BuilderConfig {
            negative_ratio: self.negative_ratio,
            distractors: self.distractors.clone().unwrap_or(base.distractors),
            category_prefix: self.category_prefix,
        }
    }

    pub fn weight(&self, task: Task) -> f64 {
        self.task_weights.get(&task).copied().unwrap_or(0.0)
    }

    pub fn catalog(&self) -> CliResult<TemplateCatalog> {
        match &self.template_catalog {
            None => Ok(TemplateCatalog::builtin()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
                TemplateCatalog::from_json(&text).map_err(|e| CliError::input(format!("{}: {e}", p.display())))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub shard_size: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("forge-out"), shard_size: 10_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Ground-truth JSONL used by `eval --kind sot` when `--gt` is not given.
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgeConfig {
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub builder: BuildSection,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl ForgeConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let cfg = if is_json { Self::from_json(&text) } else { Self::from_toml(&text) }
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let cfg = cfg.resolve_paths(base);
        cfg.validate().map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }

    /// Makes relative paths relative to the config file's directory.
    pub fn resolve_paths(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() && !p.as_os_str().is_empty() {
                *p = base.join(&*p);
            }
        };
        for s in &mut self.sources {
            fix(&mut s.path);
            s.seqinfo.as_mut().map(fix);
            s.image_dir.as_mut().map(fix);
            s.attributes.as_mut().map(fix);
        }
        self.builder.template_catalog.as_mut().map(fix);
        self.eval.ground_truth.as_mut().map(fix);
        fix(&mut self.output.directory);
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        for (i, s) in self.sources.iter().enumerate() {
            if s.dataset.trim().is_empty() {
                return Err(format!("sources[{i}]: empty dataset tag"));
            }
            if s.path.as_os_str().is_empty() {
                return Err(format!("sources[{i}]: empty path"));
            }
            if s.format == SourceFormat::Sot {
                if s.image_dir.as_ref().is_none_or(|p| p.as_os_str().is_empty()) {
                    return Err(format!("sources[{i}]: sot sources need image_dir"));
                }
                if s.width.unwrap_or(0) == 0 || s.height.unwrap_or(0) == 0 {
                    return Err(format!("sources[{i}]: sot sources need positive width and height"));
                }
            }
        }
        self.sampler.validate().map_err(|e| e.to_string())?;
        let b = &self.builder;
        if !(0.0..=1.0).contains(&b.negative_ratio) {
            return Err("builder.negative_ratio must be in [0, 1]".into());
        }
        if b.task_weights.values().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("builder.task_weights must be nonnegative".into());
        }
        if b.task_weights.values().sum::<f64>() <= 0.0 {
            return Err("builder.task_weights must sum to a positive value".into());
        }
        if b.textgen.kind == TextGenKind::Http && b.textgen.url.as_deref().is_none_or(|u| u.trim().is_empty()) {
            return Err("builder.textgen.url is required for kind = \"http\"".into());
        }
        if self.output.shard_size < 1 {
            return Err("output.shard_size must be >= 1".into());
        }
        if self.output.directory.as_os_str().is_empty() {
            return Err("output.directory is empty".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
