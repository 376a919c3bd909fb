//! Checkpoints: a JSON manifest beside little-endian f32 blobs.
//!
//! `checkpoint.bin` holds every parameter in lexicographic name order.
//! Optimizer moments (`m` then `v` per trainable parameter) live in
//! `checkpoint.opt.bin` so the parameter blob stays exactly the size of the
//! parameter table.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use maefuse_core::mae::{MaeConfig, MaeModel};
use maefuse_core::nnkit::{AdamW, AdamWConfig, Moments};
use maefuse_core::{Module, Rng, RngState};
use serde::{Deserialize, Serialize};

use crate::error::{io_at, CliError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const FILE_NAME: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the parameter blob.
    pub offset: usize,
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub name: String,
    /// Byte offset of `m` in the optimizer blob; `v` follows it.
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    pub moments: Vec<MomentEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config: serde_json::Value,
    pub mae: MaeConfig,
    pub step: u64,
    pub rng: BTreeMap<String, RngState>,
    pub params: Vec<ParamEntry>,
    pub optimizer: Option<OptimizerState>,
}

/// An MAE with its training state.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: serde_json::Value,
    pub model: MaeModel<f32>,
    pub optimizer: Option<AdamW<f32>>,
    pub rng: BTreeMap<String, RngState>,
    pub step: u64,
}

/// Accepts a manifest path or the directory holding `checkpoint.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(FILE_NAME)
    } else {
        path.to_path_buf()
    }
}

pub fn blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn optimizer_blob_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("opt.bin")
}

fn push_f32(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Parameter table sorted by name and the matching blob.
pub fn encode_params<M: Module<f32>>(model: &M) -> Result<(Vec<ParamEntry>, Vec<u8>)> {
    let mut params = model.parameters();
    params.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = params.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(CliError::Config(format!("duplicate parameter name `{}`", w[0].name)));
    }
    let mut entries = Vec::with_capacity(params.len());
    let mut blob = Vec::new();
    for p in params {
        entries.push(ParamEntry {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
            offset: blob.len(),
            frozen: p.frozen,
        });
        push_f32(&mut blob, p.tensor.data());
    }
    Ok((entries, blob))
}

/// Overwrites every parameter of `model` from the table and blob. The model
/// is only modified once the whole table has been checked.
pub fn decode_params<M: Module<f32>>(model: &mut M, entries: &[ParamEntry], blob: &[u8], path: &Path) -> Result<()> {
    let corrupt = |detail: String| CliError::Corrupt {
        path: path.to_path_buf(),
        detail,
    };
    let expected: usize = entries.iter().map(|e| 4 * e.shape.iter().product::<usize>()).sum();
    if blob.len() != expected {
        return Err(corrupt(format!(
            "parameter blob has {} bytes, the table describes {expected}",
            blob.len()
        )));
    }
    let mut by_name: HashMap<&str, &ParamEntry> = HashMap::with_capacity(entries.len());
    for e in entries {
        let end = e.offset + 4 * e.shape.iter().product::<usize>();
        if end > blob.len() {
            return Err(corrupt(format!("parameter `{}` extends past the blob", e.name)));
        }
        if by_name.insert(&e.name, e).is_some() {
            return Err(corrupt(format!("parameter `{}` is listed twice", e.name)));
        }
    }
    let mut problems = Vec::new();
    let mut seen = 0;
    model.visit(&mut |p| match by_name.get(p.name.as_str()) {
        None => problems.push(format!("parameter `{}` is missing", p.name)),
        Some(e) if e.shape != p.tensor.shape() => problems.push(format!(
            "parameter `{}` has shape {:?}, the model expects {:?}",
            p.name,
            e.shape,
            p.tensor.shape()
        )),
        Some(_) => seen += 1,
    });
    if let Some(first) = problems.into_iter().next() {
        return Err(corrupt(first));
    }
    if seen != entries.len() {
        return Err(corrupt(format!(
            "table lists {} parameters, the model has {seen}",
            entries.len()
        )));
    }
    model.visit_mut(&mut |p| {
        let e = by_name[p.name.as_str()];
        let bytes = &blob[e.offset..e.offset + 4 * p.tensor.numel()];
        p.tensor.data_mut().copy_from_slice(&read_f32(bytes));
        p.frozen = e.frozen;
    });
    Ok(())
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let (params, blob) = encode_params(&ck.model)?;
    let optimizer = ck.optimizer.as_ref().map(|opt| {
        let mut bytes = Vec::new();
        let moments = opt
            .moments()
            .iter()
            .map(|(name, m)| {
                let entry = MomentEntry {
                    name: name.clone(),
                    offset: bytes.len(),
                    len: m.m.len(),
                };
                push_f32(&mut bytes, &m.m);
                push_f32(&mut bytes, &m.v);
                entry
            })
            .collect();
        (
            OptimizerState {
                config: opt.config.clone(),
                step: opt.step_count(),
                moments,
            },
            bytes,
        )
    });
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        config: ck.config.clone(),
        mae: ck.model.config.clone(),
        step: ck.step,
        rng: ck.rng.clone(),
        params,
        optimizer: optimizer.as_ref().map(|o| o.0.clone()),
    };
    let bin = blob_path(path);
    std::fs::write(&bin, &blob).map_err(io_at(&bin))?;
    let opt_bin = optimizer_blob_path(path);
    match &optimizer {
        Some((_, bytes)) => std::fs::write(&opt_bin, bytes).map_err(io_at(&opt_bin))?,
        None if opt_bin.exists() => std::fs::remove_file(&opt_bin).map_err(io_at(&opt_bin))?,
        None => {}
    }
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    std::fs::write(path, json).map_err(io_at(path))?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<CheckpointManifest> {
    let bytes = std::fs::read(path).map_err(io_at(path))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| CliError::Corrupt {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).ok_or_else(|| CliError::Corrupt {
        path: path.to_path_buf(),
        detail: "missing format_version".into(),
    })?;
    if found != FORMAT_VERSION as u64 {
        return Err(CliError::Version {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    serde_json::from_value(value).map_err(|e| CliError::Corrupt {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

fn decode_optimizer(state: &OptimizerState, path: &Path) -> Result<AdamW<f32>> {
    let bin = optimizer_blob_path(path);
    let bytes = std::fs::read(&bin).map_err(io_at(&bin))?;
    let corrupt = |detail: String| CliError::Corrupt { path: bin.clone(), detail };
    let expected: usize = state.moments.iter().map(|m| 8 * m.len).sum();
    if bytes.len() != expected {
        return Err(corrupt(format!(
            "optimizer blob has {} bytes, the table describes {expected}",
            bytes.len()
        )));
    }
    let mut moments = BTreeMap::new();
    for e in &state.moments {
        let end = e.offset + 8 * e.len;
        if end > bytes.len() {
            return Err(corrupt(format!("moments of `{}` extend past the blob", e.name)));
        }
        let mid = e.offset + 4 * e.len;
        moments.insert(
            e.name.clone(),
            Moments {
                m: read_f32(&bytes[e.offset..mid]),
                v: read_f32(&bytes[mid..end]),
            },
        );
    }
    Ok(AdamW::restore(state.config.clone(), state.step, moments))
}

/// Loads a checkpoint; any inconsistency fails without returning a model.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let path = manifest_path(path);
    let manifest = read_manifest(&path)?;
    let bin = blob_path(&path);
    let blob = std::fs::read(&bin).map_err(io_at(&bin))?;
    let mut model = MaeModel::new(manifest.mae.clone(), &mut Rng::new(0))?;
    decode_params(&mut model, &manifest.params, &blob, &bin)?;
    let optimizer = match &manifest.optimizer {
        Some(state) => Some(decode_optimizer(state, &path)?),
        None => None,
    };
    Ok(Checkpoint {
        config: manifest.config,
        model,
        optimizer,
        rng: manifest.rng,
        step: manifest.step,
    })
}

/// Restores a named stream, or starts it fresh from the seed.
pub fn stream(rngs: &BTreeMap<String, RngState>, seed: u64, name: &str) -> Rng {
    rngs.get(name)
        .map(Rng::from_state)
        .unwrap_or_else(|| Rng::substream(seed, name))
}
