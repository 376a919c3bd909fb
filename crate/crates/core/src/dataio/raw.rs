//! Raw fallback volume format: a JSON sidecar describing a little-endian
//! float32 blob stored beside it with the `.bin` extension.

use std::path::{Path, PathBuf};

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use super::Volume;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub dims: [usize; 3],
    pub voxel_size: [f32; 3],
    pub dtype: String,
}

pub fn blob_path(sidecar: &Path) -> PathBuf {
    sidecar.with_extension("bin")
}

pub fn read_raw_volume(sidecar: &Path) -> Result<Volume> {
    let meta: RawSidecar = serde_json::from_slice(&std::fs::read(sidecar)?)?;
    if meta.dtype != "f32" {
        return Err(Error::Data(format!(
            "{}: unsupported raw dtype `{}` (only f32)",
            sidecar.display(),
            meta.dtype
        )));
    }
    let bytes = std::fs::read(blob_path(sidecar))?;
    let n: usize = meta.dims.iter().product();
    if bytes.len() != 4 * n {
        return Err(Error::Data(format!(
            "{}: expected {} bytes of f32 data, found {}",
            blob_path(sidecar).display(),
            4 * n,
            bytes.len()
        )));
    }
    let mut data = vec![0f32; n];
    LittleEndian::read_f32_into(&bytes, &mut data);
    let v = Volume::new(meta.dims, meta.voxel_size, data)?;
    Ok(v.with_subject(
        sidecar
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
    ))
}

pub fn write_raw_volume(v: &Volume, sidecar: &Path) -> Result<()> {
    let meta = RawSidecar {
        dims: v.dims,
        voxel_size: v.voxel_size,
        dtype: "f32".into(),
    };
    std::fs::write(sidecar, serde_json::to_vec_pretty(&meta)?)?;
    let mut bytes = vec![0u8; 4 * v.data.len()];
    LittleEndian::write_f32_into(&v.data, &mut bytes);
    std::fs::write(blob_path(sidecar), bytes)?;
    Ok(())
}

/// Reads a `.nii` file or a raw sidecar (`.json`), chosen by extension.
pub fn read_volume(path: &Path) -> Result<Volume> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("nii") => super::read_nifti1_file(path),
        Some("json") => read_raw_volume(path),
        _ => Err(Error::Data(format!(
            "{}: expected a .nii file or a .json raw sidecar",
            path.display()
        ))),
    }
}
