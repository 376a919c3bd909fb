use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{
    brain_coverage_weight, preprocess_slice, preprocess_slice_with_bounds, read_volume,
    resample_isotropic, resample_isotropic_nearest, resize_pad_labels, slice_plane, volume_clamp_bounds,
    CoverageWeighting, DatasetIndex, IndexEntry, LabelMap, SliceRecord, SliceSource, Volume,
};
use crate::{Error, Result};

/// Where clamp percentiles are computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileScope {
    #[default]
    Slice,
    Volume,
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub image_size: usize,
    pub percentile_scope: PercentileScope,
    pub coverage: CoverageWeighting,
    /// Number of segmentation classes; mask labels must be below it.
    pub num_seg_classes: Option<usize>,
    pub workers: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            image_size: 224,
            percentile_scope: PercentileScope::Slice,
            coverage: CoverageWeighting::default(),
            num_seg_classes: None,
            workers: 1,
        }
    }
}

struct Loaded {
    iso: Volume,
    bounds: (f64, f64),
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_intensity(path: &Path) -> Result<Loaded> {
    let iso = resample_isotropic(&read_volume(path)?);
    let bounds = volume_clamp_bounds(&iso);
    Ok(Loaded { iso, bounds })
}

fn load_labels(path: &Path) -> Result<Volume> {
    Ok(resample_isotropic_nearest(&read_volume(path)?))
}

fn label_slice(vol: &Volume, e: &IndexEntry, size: usize) -> Result<LabelMap> {
    let m = LabelMap::from_plane(&slice_plane(vol, e.axis, e.index)?)?;
    Ok(resize_pad_labels(&m, size))
}

fn build_record(
    e: &IndexEntry,
    base: &Path,
    opts: &LoadOptions,
    cache: &mut HashMap<PathBuf, Arc<Loaded>>,
    labels: &mut HashMap<PathBuf, Arc<Volume>>,
) -> Result<SliceRecord> {
    let path = resolve(base, &e.path);
    let vol = match cache.get(&path) {
        Some(v) => v.clone(),
        None => {
            let v = Arc::new(load_intensity(&path)?);
            cache.insert(path.clone(), v.clone());
            v
        }
    };
    let raw = slice_plane(&vol.iso, e.axis, e.index)?;
    let image = match opts.percentile_scope {
        PercentileScope::Slice => preprocess_slice(&raw, opts.image_size),
        PercentileScope::Volume => preprocess_slice_with_bounds(&raw, opts.image_size, vol.bounds),
    };
    let mut fetch_mask = |p: &Option<String>| -> Result<Option<LabelMap>> {
        let Some(p) = p else { return Ok(None) };
        let path = resolve(base, p);
        let v = match labels.get(&path) {
            Some(v) => v.clone(),
            None => {
                let v = Arc::new(load_labels(&path)?);
                labels.insert(path.clone(), v.clone());
                v
            }
        };
        if v.dims != vol.iso.dims {
            return Err(Error::Data(format!(
                "{}: mask dims {:?} differ from image dims {:?}",
                path.display(),
                v.dims,
                vol.iso.dims
            )));
        }
        label_slice(&v, e, opts.image_size).map(Some)
    };
    let seg_mask = fetch_mask(&e.mask_path)?;
    let brain_mask = fetch_mask(&e.brain_mask_path)?;
    if let (Some(m), Some(c)) = (&seg_mask, opts.num_seg_classes) {
        if let Some(&bad) = m.data.iter().find(|&&v| v as usize >= c) {
            return Err(Error::Data(format!("{}: mask label {bad} >= {c} classes", e.path)));
        }
    }
    let weight = match &brain_mask {
        Some(bm) => brain_coverage_weight(bm, &opts.coverage)?,
        None => 1.0,
    };
    Ok(SliceRecord {
        image,
        source: SliceSource {
            subject_id: vol.iso.subject_id.clone(),
            axis: e.axis,
            index: e.index,
        },
        label: e.label,
        seg_mask,
        brain_mask,
        weight,
    })
}

/// Loads and preprocesses every entry, resolving relative paths against
/// `base`. Work is split into contiguous chunks across `opts.workers`
/// threads; output order always matches the index.
pub fn load_records(index: &DatasetIndex, base: &Path, opts: &LoadOptions) -> Result<Vec<SliceRecord>> {
    let workers = opts.workers.max(1).min(index.entries.len().max(1));
    let chunk = index.entries.len().div_ceil(workers).max(1);
    let parts: Vec<Result<Vec<SliceRecord>>> = std::thread::scope(|s| {
        let handles: Vec<_> = index
            .entries
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    let mut cache = HashMap::new();
                    let mut labels = HashMap::new();
                    part.iter()
                        .map(|e| build_record(e, base, opts, &mut cache, &mut labels))
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("loader thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(index.entries.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
