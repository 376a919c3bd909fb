//! Experiment configuration: a TOML file plus `--set key=value` overrides.

use std::path::{Path, PathBuf};

use maefuse_core::classify::SEQUENCE_CLASSES;
use maefuse_core::dataio::{AugmentPolicy, CoverageWeighting, PercentileScope};
use maefuse_core::funet::{FunetConfig, FusionStrategy, HybridLossConfig};
use maefuse_core::mae::MaeConfig;
use maefuse_core::metrics::{region_preset, Scoring};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_at, CliError, Result};

/// Name of the built-in MRI sequence label set.
pub const SEQUENCE_PRESET: &str = "sequences";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Pretrain,
    Classify,
    Segment,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Pretrain => "pretrain",
            Task::Classify => "classify",
            Task::Segment => "segment",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmenterKind {
    #[default]
    Funet,
    MaeDirect,
}

/// Model preset with per-field overrides of the MAE and FUnet settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: String,
    pub segmenter: SegmenterKind,
    pub mae: toml::Table,
    pub funet: toml::Table,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: "desk".into(),
            segmenter: SegmenterKind::Funet,
            mae: toml::Table::new(),
            funet: toml::Table::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub manifest: PathBuf,
    #[serde(default)]
    pub eval_manifest: Option<PathBuf>,
    /// Ordered class names; derived from the manifest labels when absent.
    /// In the file it may also be `"sequences"` or the path of a JSON list.
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    /// Keep only entries whose slice index is a multiple of `stride`.
    #[serde(default)]
    pub stride: Option<usize>,
    #[serde(default)]
    pub n_per_class: Option<usize>,
    /// Keep only the first `sample_size` volumes of the training manifest.
    #[serde(default)]
    pub sample_size: Option<usize>,
    #[serde(default)]
    pub percentile_scope: PercentileScope,
    #[serde(default)]
    pub coverage: CoverageWeighting,
    /// Augment pretraining batches and probe training slices.
    #[serde(default)]
    pub augment: bool,
    #[serde(default)]
    pub augment_policy: AugmentPolicy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps: usize,
}

impl Default for OptimSection {
    fn default() -> Self {
        OptimSection {
            lr: 1e-4,
            weight_decay: 0.01,
            batch_size: 16,
            steps: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    /// Few-shot sizes for the accuracy-vs-n sweep.
    pub sweep: Vec<usize>,
    pub standardize: bool,
}

impl Default for ClassifySection {
    fn default() -> Self {
        ClassifySection {
            sweep: Vec::new(),
            standardize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentSection {
    /// Region preset (`skull_strip`, `nacc`, `mrbrains`).
    pub regions: String,
    /// Explicit foreground region names; overrides `regions`.
    pub region_names: Option<Vec<String>>,
    pub scoring: Scoring,
    pub strides: Vec<usize>,
    pub sample_sizes: Vec<usize>,
    pub strategies: Vec<FusionStrategy>,
    pub loss: HybridLossConfig,
    pub eval_batch: usize,
}

impl Default for SegmentSection {
    fn default() -> Self {
        SegmentSection {
            regions: "skull_strip".into(),
            region_names: None,
            scoring: Scoring::PerVolume,
            strides: Vec::new(),
            sample_sizes: Vec::new(),
            strategies: Vec::new(),
            loss: HybridLossConfig::default(),
            eval_batch: 16,
        }
    }
}

impl SegmentSection {
    pub fn region_names(&self) -> Result<Vec<String>> {
        match &self.region_names {
            Some(names) if names.is_empty() => Err(CliError::Config("segment.region_names is empty".into())),
            Some(names) => Ok(names.clone()),
            None => Ok(region_preset(&self.regions)?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub model: ModelSection,
    pub data: DataSection,
    #[serde(default)]
    pub optim: OptimSection,
    #[serde(default)]
    pub classify: ClassifySection,
    #[serde(default)]
    pub segment: SegmentSection,
    /// Pretraining resumes from it; probing and segmentation load the MAE.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

fn one() -> usize {
    1
}

/// Sets `dotted.key` in `table` to the TOML literal `value`, or to the raw
/// string when it does not parse as one.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("invalid override key `{key}`")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn merge_overrides<C: Serialize + DeserializeOwned>(base: &C, overrides: &toml::Table, what: &str) -> Result<C> {
    let mut table = toml::Table::try_from(base).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
    for (k, v) in overrides {
        if !table.contains_key(k) {
            return Err(CliError::Config(format!("unknown {what} setting `{k}`")));
        }
        table.insert(k.clone(), v.clone());
    }
    C::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Config(format!("{what}: {e}")))
}

/// Replaces a string `data.classes` with the label set it names: the
/// built-in `sequences` preset or a JSON list of class names on disk.
fn resolve_class_set(table: &mut toml::Table, base: &Path) -> Result<()> {
    let Some(toml::Value::Table(data)) = table.get_mut("data") else {
        return Ok(());
    };
    let Some(toml::Value::String(name)) = data.get("classes") else {
        return Ok(());
    };
    let names: Vec<String> = if name == SEQUENCE_PRESET {
        SEQUENCE_CLASSES.iter().map(|s| s.to_string()).collect()
    } else {
        let path = resolve(base, Path::new(name));
        let text = std::fs::read_to_string(&path).map_err(io_at(&path))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
    };
    if names.is_empty() {
        return Err(CliError::Config(format!("label set `{name}` is empty")));
    }
    data.insert("classes".into(), toml::Value::Array(names.into_iter().map(toml::Value::String).collect()));
    Ok(())
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl ExperimentConfig {
    /// Parses a TOML document, applies overrides and fixes the task.
    /// Relative paths resolve against `base`.
    pub fn from_toml_str(text: &str, overrides: &[String], task: Task, base: &Path) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        match table.get("task") {
            None => {
                table.insert("task".into(), toml::Value::String(task.as_str().into()));
            }
            Some(toml::Value::String(t)) if t == task.as_str() => {}
            Some(other) => {
                return Err(CliError::Config(format!(
                    "config declares task {other} but `{}` was requested",
                    task.as_str()
                )))
            }
        }
        resolve_class_set(&mut table, base)?;
        if !table.contains_key("seed") {
            return Err(CliError::Config("`seed` is mandatory".into()));
        }
        let mut cfg = ExperimentConfig::deserialize(toml::Value::Table(table))
            .map_err(|e| CliError::Config(e.to_string()))?;
        cfg.output_dir = resolve(base, &cfg.output_dir);
        cfg.data.manifest = resolve(base, &cfg.data.manifest);
        cfg.data.eval_manifest = cfg.data.eval_manifest.map(|p| resolve(base, &p));
        cfg.checkpoint = cfg.checkpoint.map(|p| resolve(base, &p));
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String], task: Task) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        ExperimentConfig::from_toml_str(&text, overrides, task, base)
    }

    pub fn mae_config(&self) -> Result<MaeConfig> {
        let cfg: MaeConfig = merge_overrides(&MaeConfig::preset(&self.model.preset)?, &self.model.mae, "model.mae")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn funet_config(&self) -> Result<FunetConfig> {
        merge_overrides(&FunetConfig::preset(&self.model.preset)?, &self.model.funet, "model.funet")
    }

    /// Checks paths and task-specific requirements.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CliError::Config(m));
        let exists = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        exists(&self.data.manifest, "data.manifest")?;
        if let Some(p) = &self.data.eval_manifest {
            exists(p, "data.eval_manifest")?;
        }
        if let Some(p) = &self.checkpoint {
            exists(p, "checkpoint")?;
        }
        if self.optim.batch_size == 0 || !(self.optim.lr > 0.0) || !(self.optim.weight_decay >= 0.0) {
            return fail(format!("optim settings out of range: {:?}", self.optim));
        }
        if self.workers == 0 {
            return fail("workers must be >= 1".into());
        }
        if self.data.stride == Some(0) || self.data.sample_size == Some(0) || self.data.n_per_class == Some(0) {
            return fail("data.stride, data.sample_size and data.n_per_class must be >= 1".into());
        }
        if self.data.stride.is_some() && self.data.sample_size.is_some() {
            return fail("data.stride and data.sample_size are mutually exclusive".into());
        }
        self.data.coverage.validate()?;
        self.data.augment_policy.validate()?;
        self.mae_config()?;
        if self.task != Task::Pretrain {
            if self.checkpoint.is_none() {
                return fail(format!("{} needs a pretrained `checkpoint`", self.task.as_str()));
            }
            if self.data.eval_manifest.is_none() {
                return fail(format!("{} needs `data.eval_manifest`", self.task.as_str()));
            }
            if self.optim.steps == 0 {
                return fail("optim.steps must be >= 1".into());
            }
        }
        match self.task {
            Task::Classify => {
                if self.classify.sweep.contains(&0) {
                    return fail("classify.sweep entries must be >= 1".into());
                }
            }
            Task::Segment => {
                let s = &self.segment;
                let sweeps = [!s.strides.is_empty(), !s.sample_sizes.is_empty(), !s.strategies.is_empty()];
                if sweeps.iter().filter(|&&b| b).count() > 1 {
                    return fail("at most one of segment.strides, segment.sample_sizes, segment.strategies".into());
                }
                if s.strides.contains(&0) || s.sample_sizes.contains(&0) || s.eval_batch == 0 {
                    return fail("segment sweep values and eval_batch must be >= 1".into());
                }
                if !s.strategies.is_empty() && self.model.segmenter == SegmenterKind::MaeDirect {
                    return fail("fusion-strategy sweeps need the funet segmenter".into());
                }
                s.loss.validate()?;
                s.region_names()?;
                self.funet_config()?;
            }
            Task::Pretrain => {}
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, lowercase hex.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}
