//! Minimal single-file NIfTI-1 (`.nii`, uncompressed) reader and writer.
//!
//! Header fields used (byte offsets): `sizeof_hdr` 0, `dim[8]` 40,
//! `datatype` 70, `bitpix` 72, `pixdim[8]` 76, `vox_offset` 108,
//! `scl_slope` 112, `scl_inter` 116, `magic` 344. Byte order is detected from
//! `sizeof_hdr`, which must read 348.

use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};

use super::Volume;
use crate::{NiftiError, Result};

pub const HEADER_SIZE: usize = 348;
/// Header plus the 4-byte extension flag; the usual `vox_offset`.
pub const MIN_FILE_SIZE: usize = 352;
pub const MAGIC: &[u8; 4] = b"n+1\0";

pub const DT_UINT8: i16 = 2;
pub const DT_INT16: i16 = 4;
pub const DT_FLOAT32: i16 = 16;
pub const DT_FLOAT64: i16 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Endian {
    Little,
    Big,
}

struct Reader<'a> {
    bytes: &'a [u8],
    endian: Endian,
}

impl Reader<'_> {
    fn i16(&self, off: usize) -> i16 {
        match self.endian {
            Endian::Little => LittleEndian::read_i16(&self.bytes[off..]),
            Endian::Big => BigEndian::read_i16(&self.bytes[off..]),
        }
    }

    fn f32(&self, off: usize) -> f32 {
        match self.endian {
            Endian::Little => LittleEndian::read_f32(&self.bytes[off..]),
            Endian::Big => BigEndian::read_f32(&self.bytes[off..]),
        }
    }

    fn f64(&self, off: usize) -> f64 {
        match self.endian {
            Endian::Little => LittleEndian::read_f64(&self.bytes[off..]),
            Endian::Big => BigEndian::read_f64(&self.bytes[off..]),
        }
    }
}

fn bytes_per_voxel(datatype: i16) -> std::result::Result<usize, NiftiError> {
    match datatype {
        DT_UINT8 => Ok(1),
        DT_INT16 => Ok(2),
        DT_FLOAT32 => Ok(4),
        DT_FLOAT64 => Ok(8),
        other => Err(NiftiError::UnsupportedDatatype(other)),
    }
}

/// Decodes a single-file NIfTI-1 image into a [`Volume`] (first three dims).
pub fn parse_nifti1(bytes: &[u8]) -> std::result::Result<Volume, NiftiError> {
    if bytes.len() < MIN_FILE_SIZE {
        return Err(NiftiError::NotNifti(format!(
            "{} bytes is shorter than the {}-byte minimum",
            bytes.len(),
            MIN_FILE_SIZE
        )));
    }
    let endian = if LittleEndian::read_i32(bytes) == HEADER_SIZE as i32 {
        Endian::Little
    } else if BigEndian::read_i32(bytes) == HEADER_SIZE as i32 {
        Endian::Big
    } else {
        return Err(NiftiError::NotNifti("sizeof_hdr is not 348".into()));
    };
    if &bytes[344..348] != MAGIC {
        return Err(NiftiError::NotNifti(format!(
            "magic {:?} is not \"n+1\\0\"",
            String::from_utf8_lossy(&bytes[344..348])
        )));
    }
    let r = Reader { bytes, endian };

    let ndim = r.i16(40);
    if !(3..=7).contains(&ndim) {
        return Err(NiftiError::Dimensionality(ndim));
    }
    let mut dims = Vec::with_capacity(ndim as usize);
    for i in 1..=ndim as usize {
        let d = r.i16(40 + 2 * i);
        if d < 1 {
            return Err(NiftiError::InvalidField {
                field: "dim",
                detail: format!("dim[{i}] = {d}"),
            });
        }
        dims.push(d as usize);
    }
    let datatype = r.i16(70);
    let bpv = bytes_per_voxel(datatype)?;

    let mut voxel_size = [0f32; 3];
    for (i, vs) in voxel_size.iter_mut().enumerate() {
        let p = r.f32(80 + 4 * i).abs();
        if !(p > 0.0) || !p.is_finite() {
            return Err(NiftiError::InvalidField {
                field: "pixdim",
                detail: format!("pixdim[{}] = {}", i + 1, p),
            });
        }
        *vs = p;
    }

    let vox_offset = r.f32(108);
    if !(vox_offset >= HEADER_SIZE as f32) || vox_offset.fract() != 0.0 {
        return Err(NiftiError::InvalidField {
            field: "vox_offset",
            detail: format!("{vox_offset}"),
        });
    }
    let offset = vox_offset as usize;
    let total_voxels: usize = dims.iter().product();
    let expected = total_voxels * bpv;
    let actual = bytes.len().saturating_sub(offset);
    if actual < expected {
        return Err(NiftiError::Truncated { expected, actual });
    }

    let slope = r.f32(112);
    let inter = r.f32(116);
    let scale = |v: f64| -> f64 {
        if slope != 0.0 && slope.is_finite() {
            v * slope as f64 + if inter.is_finite() { inter as f64 } else { 0.0 }
        } else {
            v
        }
    };

    let n = dims[0] * dims[1] * dims[2];
    let payload = &bytes[offset..offset + n * bpv];
    let body = Reader { bytes: payload, endian };
    let mut data = Vec::with_capacity(n);
    for i in 0..n {
        let raw = match datatype {
            DT_UINT8 => payload[i] as f64,
            DT_INT16 => body.i16(2 * i) as f64,
            DT_FLOAT32 => body.f32(4 * i) as f64,
            _ => body.f64(8 * i),
        };
        let v = scale(raw) as f32;
        if !v.is_finite() {
            return Err(NiftiError::InvalidField {
                field: "data",
                detail: format!("non-finite voxel at index {i}"),
            });
        }
        data.push(v);
    }
    Ok(Volume {
        dims: [dims[0], dims[1], dims[2]],
        voxel_size,
        data,
        modality: None,
        subject_id: String::new(),
    })
}

/// Encodes a volume as a little-endian float32 NIfTI-1 file (`vox_offset` 352,
/// no scaling).
pub fn write_nifti1(v: &Volume) -> Vec<u8> {
    let mut out = vec![0u8; MIN_FILE_SIZE + 4 * v.data.len()];
    LittleEndian::write_i32(&mut out[0..], HEADER_SIZE as i32);
    LittleEndian::write_i16(&mut out[40..], 3);
    for i in 0..3 {
        LittleEndian::write_i16(&mut out[42 + 2 * i..], v.dims[i] as i16);
    }
    for i in 3..7 {
        LittleEndian::write_i16(&mut out[42 + 2 * i..], 1);
    }
    LittleEndian::write_i16(&mut out[70..], DT_FLOAT32);
    LittleEndian::write_i16(&mut out[72..], 32);
    LittleEndian::write_f32(&mut out[76..], 1.0);
    for i in 0..3 {
        LittleEndian::write_f32(&mut out[80 + 4 * i..], v.voxel_size[i]);
    }
    LittleEndian::write_f32(&mut out[108..], MIN_FILE_SIZE as f32);
    LittleEndian::write_f32(&mut out[112..], 0.0);
    LittleEndian::write_f32(&mut out[116..], 0.0);
    out[123] = 10; // xyzt_units: mm + s
    out[344..348].copy_from_slice(MAGIC);
    for (i, &x) in v.data.iter().enumerate() {
        LittleEndian::write_f32(&mut out[MIN_FILE_SIZE + 4 * i..], x);
    }
    out
}

pub fn read_nifti1_file(path: &Path) -> Result<Volume> {
    let bytes = std::fs::read(path)?;
    let mut v = parse_nifti1(&bytes)?;
    v.subject_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(v)
}

pub fn write_nifti1_file(v: &Volume, path: &Path) -> Result<()> {
    std::fs::write(path, write_nifti1(v))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(magic: &[u8; 4], datatype: i16, dims: [i16; 4], payload: &[u8]) -> Vec<u8> {
        let mut b = vec![0u8; MIN_FILE_SIZE];
        LittleEndian::write_i32(&mut b[0..], 348);
        for (i, d) in dims.iter().enumerate() {
            LittleEndian::write_i16(&mut b[40 + 2 * i..], *d);
        }
        LittleEndian::write_i16(&mut b[70..], datatype);
        for i in 0..3 {
            LittleEndian::write_f32(&mut b[80 + 4 * i..], 1.0);
        }
        LittleEndian::write_f32(&mut b[108..], 352.0);
        b[344..348].copy_from_slice(magic);
        b.extend_from_slice(payload);
        b
    }

    fn f32_payload(values: &[f32]) -> Vec<u8> {
        let mut p = vec![0u8; 4 * values.len()];
        LittleEndian::write_f32_into(values, &mut p);
        p
    }

    #[test]
    fn minimal_float_file() {
        let bytes = header(MAGIC, DT_FLOAT32, [3, 4, 4, 4], &f32_payload(&[0.5; 64]));
        let v = parse_nifti1(&bytes).unwrap();
        assert_eq!(v.dims, [4, 4, 4]);
        assert_eq!(v.voxel_size, [1.0, 1.0, 1.0]);
        assert!(v.data.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn wrong_magic() {
        let bytes = header(b"abcd", DT_FLOAT32, [3, 4, 4, 4], &f32_payload(&[0.0; 64]));
        let err = parse_nifti1(&bytes).unwrap_err();
        assert!(matches!(err, NiftiError::NotNifti(_)));
        assert!(err.to_string().contains("not NIfTI-1"));
    }

    #[test]
    fn scaling_applied() {
        let mut bytes = header(MAGIC, DT_FLOAT32, [3, 1, 1, 1], &f32_payload(&[3.0]));
        LittleEndian::write_f32(&mut bytes[112..], 2.0);
        LittleEndian::write_f32(&mut bytes[116..], 1.0);
        assert_eq!(parse_nifti1(&bytes).unwrap().data, vec![7.0]);
    }

    #[test]
    fn unsupported_datatype_named() {
        let bytes = header(MAGIC, 512, [3, 1, 1, 1], &[0u8; 8]);
        let err = parse_nifti1(&bytes).unwrap_err();
        assert_eq!(err, NiftiError::UnsupportedDatatype(512));
        assert!(err.to_string().contains("512"));
    }

    #[test]
    fn low_dimensionality_rejected() {
        let bytes = header(MAGIC, DT_FLOAT32, [2, 4, 4, 1], &f32_payload(&[0.0; 16]));
        assert_eq!(parse_nifti1(&bytes).unwrap_err(), NiftiError::Dimensionality(2));
    }

    #[test]
    fn truncated_payload_reports_counts() {
        let bytes = header(MAGIC, DT_FLOAT32, [3, 4, 4, 4], &f32_payload(&[0.0; 60]));
        assert_eq!(
            parse_nifti1(&bytes).unwrap_err(),
            NiftiError::Truncated { expected: 256, actual: 240 }
        );
    }

    #[test]
    fn integer_types_and_big_endian() {
        let bytes = header(MAGIC, DT_UINT8, [3, 2, 1, 1], &[7, 200]);
        assert_eq!(parse_nifti1(&bytes).unwrap().data, vec![7.0, 200.0]);

        let mut b = vec![0u8; MIN_FILE_SIZE];
        BigEndian::write_i32(&mut b[0..], 348);
        for (i, d) in [3i16, 2, 1, 1].iter().enumerate() {
            BigEndian::write_i16(&mut b[40 + 2 * i..], *d);
        }
        BigEndian::write_i16(&mut b[70..], DT_INT16);
        for i in 0..3 {
            BigEndian::write_f32(&mut b[80 + 4 * i..], 0.5);
        }
        BigEndian::write_f32(&mut b[108..], 352.0);
        b[344..348].copy_from_slice(MAGIC);
        b.extend_from_slice(&(-300i16).to_be_bytes());
        b.extend_from_slice(&(12i16).to_be_bytes());
        let v = parse_nifti1(&b).unwrap();
        assert_eq!(v.data, vec![-300.0, 12.0]);
        assert_eq!(v.voxel_size, [0.5, 0.5, 0.5]);
    }
}
