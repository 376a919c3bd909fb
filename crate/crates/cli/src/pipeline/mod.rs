//! Task pipelines and the plumbing they share.

mod classify;
mod pretrain;
mod segment;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use maefuse_core::dataio::{
    first_volumes, load_records, read_manifest, DatasetIndex, LabelRef, LoadOptions, SliceRecord,
};
use maefuse_core::Module;
use serde::Serialize;

pub use classify::run_classify;
pub use pretrain::run_pretrain;
pub use segment::run_segment;

use crate::checkpoint::{load_checkpoint, manifest_path, Checkpoint};
use crate::config::ExperimentConfig;
use crate::error::{io_at, CliError, Result};

pub const RUN_MANIFEST: &str = "run_manifest.json";
pub const LOSS_LOG: &str = "loss.csv";
pub const FIG4_CSV: &str = "fig4.csv";

/// Version string of this build, `git describe` style.
pub fn version() -> &'static str {
    env!("MAEFUSE_VERSION")
}

/// What a pipeline produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub output_dir: PathBuf,
    pub trainable_params: usize,
    pub summary: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    version: &'a str,
    task: &'a str,
    seed: u64,
    config_sha256: String,
    trainable_params: usize,
    config: &'a ExperimentConfig,
}

fn write_run_manifest(cfg: &ExperimentConfig, trainable_params: usize) -> Result<()> {
    let manifest = RunManifest {
        version: version(),
        task: cfg.task.as_str(),
        seed: cfg.seed,
        config_sha256: cfg.hash()?,
        trainable_params,
        config: cfg,
    };
    let path = cfg.output_dir.join(RUN_MANIFEST);
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    std::fs::write(&path, json).map_err(io_at(path))
}

fn prepare_output(cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_at(&cfg.output_dir))
}

/// Class names in sorted order of the labels appearing in `manifests`.
fn derived_class_names(manifests: &[&Path]) -> Result<Vec<String>> {
    let mut names = BTreeSet::new();
    for m in manifests {
        for e in read_manifest(m)? {
            match e.label {
                Some(LabelRef::Name(n)) => {
                    names.insert(n);
                }
                Some(LabelRef::Id(_)) => {
                    return Err(CliError::Config(format!(
                        "{}: numeric labels need `data.classes`",
                        m.display()
                    )))
                }
                None => {}
            }
        }
    }
    Ok(names.into_iter().collect())
}

fn class_names(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    if let Some(c) = &cfg.data.classes {
        return Ok(c.clone());
    }
    let mut manifests = vec![cfg.data.manifest.as_path()];
    if let Some(e) = &cfg.data.eval_manifest {
        manifests.push(e);
    }
    derived_class_names(&manifests)
}

fn load_index(path: &Path, classes: &[String]) -> Result<DatasetIndex> {
    Ok(DatasetIndex::from_manifest(read_manifest(path)?, classes.to_vec())?)
}

/// Keeps entries whose slice index is a multiple of `k`, giving
/// `ceil(extent / k)` slices per volume axis.
pub fn stride_filter(index: &DatasetIndex, k: usize) -> DatasetIndex {
    DatasetIndex {
        entries: index.entries.iter().filter(|e| e.index % k == 0).cloned().collect(),
        class_names: index.class_names.clone(),
    }
}

/// Applies `data.stride` or `data.sample_size`.
fn training_subset(cfg: &ExperimentConfig, index: &DatasetIndex) -> DatasetIndex {
    match (cfg.data.stride, cfg.data.sample_size) {
        (Some(k), _) => stride_filter(index, k),
        (None, Some(n)) => first_volumes(index, n),
        (None, None) => index.clone(),
    }
}

fn base_dir(manifest: &Path) -> &Path {
    manifest.parent().unwrap_or(Path::new("."))
}

fn load(cfg: &ExperimentConfig, index: &DatasetIndex, manifest: &Path, image_size: usize, seg_classes: Option<usize>) -> Result<Vec<SliceRecord>> {
    if index.is_empty() {
        return Err(CliError::Config(format!("{}: no entries selected", manifest.display())));
    }
    let opts = LoadOptions {
        image_size,
        percentile_scope: cfg.data.percentile_scope,
        coverage: cfg.data.coverage,
        num_seg_classes: seg_classes,
        workers: cfg.workers,
    };
    Ok(load_records(index, base_dir(manifest), &opts)?)
}

/// Loads the pretrained MAE named by `checkpoint` and freezes it.
fn frozen_mae(cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let path = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| CliError::Config("no `checkpoint` given".into()))?;
    let mut ck = load_checkpoint(&manifest_path(path))?;
    ck.model.freeze();
    Ok(ck)
}

/// Positions of `subset` entries within `index`.
fn positions(index: &DatasetIndex, subset: &DatasetIndex) -> Vec<usize> {
    let lookup: std::collections::HashMap<_, _> = index.entries.iter().enumerate().map(|(i, e)| (e.key(), i)).collect();
    subset.entries.iter().filter_map(|e| lookup.get(&e.key()).copied()).collect()
}
