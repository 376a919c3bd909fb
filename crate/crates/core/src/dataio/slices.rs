use serde::{Deserialize, Serialize};

use super::{resample_isotropic, Volume};
use crate::{Error, Result};

/// A 2-D float image, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height * width != data.len() || data.is_empty() {
            return Err(Error::Data(format!(
                "plane {height}x{width} does not match {} values",
                data.len()
            )));
        }
        Ok(Plane { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Plane {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// A 2-D integer label map, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u16>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u16>) -> Result<Self> {
        if height * width != data.len() {
            return Err(Error::Data(format!(
                "label map {height}x{width} does not match {} values",
                data.len()
            )));
        }
        Ok(LabelMap { height, width, data })
    }

    /// Rounds a float plane of label values to integers.
    pub fn from_plane(p: &Plane) -> Result<Self> {
        let mut data = Vec::with_capacity(p.data.len());
        for &v in &p.data {
            let r = v.round();
            if !(0.0..=u16::MAX as f32).contains(&r) {
                return Err(Error::Data(format!("label value {v} out of range")));
            }
            data.push(r as u16);
        }
        LabelMap::new(p.height, p.width, data)
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v <= 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SliceSource {
    pub subject_id: String,
    pub axis: usize,
    pub index: usize,
}

/// A preprocessed slice and its annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceRecord {
    pub image: Plane,
    pub source: SliceSource,
    pub label: Option<usize>,
    pub seg_mask: Option<LabelMap>,
    pub brain_mask: Option<LabelMap>,
    /// Brain-coverage weight; 1 when no brain mask is attached.
    pub weight: f32,
}

/// A raw slice cut from a volume.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSlice {
    pub axis: usize,
    pub index: usize,
    pub plane: Plane,
}

/// Cuts the plane perpendicular to `axis` at `index`. Rows run along the
/// higher remaining axis and columns along the lower one.
pub fn slice_plane(v: &Volume, axis: usize, index: usize) -> Result<Plane> {
    if axis > 2 {
        return Err(Error::Contract(format!("slice axis {axis} is not in {{0,1,2}}")));
    }
    if index >= v.dims[axis] {
        return Err(Error::Data(format!(
            "slice index {index} out of range for axis {axis} of extent {}",
            v.dims[axis]
        )));
    }
    let [nx, ny, nz] = v.dims;
    let (h, w) = match axis {
        0 => (nz, ny),
        1 => (nz, nx),
        _ => (ny, nx),
    };
    let mut data = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let (x, y, z) = match axis {
                0 => (index, c, r),
                1 => (c, index, r),
                _ => (c, r, index),
            };
            data.push(v.get(x, y, z));
        }
    }
    Ok(Plane { height: h, width: w, data })
}

/// Indices `0, k, 2k, ... < extent`.
pub fn stride_indices(extent: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Contract("slice stride must be >= 1".into()));
    }
    Ok((0..extent).step_by(k).collect())
}

/// Every `k`-th slice along each requested axis, after isotropic resampling.
pub fn extract_slices(v: &Volume, axes: &[usize], k: usize) -> Result<Vec<RawSlice>> {
    if axes.is_empty() {
        return Err(Error::Contract("extract_slices needs at least one axis".into()));
    }
    if let Some(&a) = axes.iter().find(|&&a| a > 2) {
        return Err(Error::Contract(format!("slice axis {a} is not in {{0,1,2}}")));
    }
    let iso = resample_isotropic(v);
    let mut out = Vec::new();
    for &axis in axes {
        for index in stride_indices(iso.dims[axis], k)? {
            out.push(RawSlice {
                axis,
                index,
                plane: slice_plane(&iso, axis, index)?,
            });
        }
    }
    Ok(out)
}
