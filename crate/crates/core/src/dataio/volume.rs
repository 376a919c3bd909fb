use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// MRI sequence tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    T1,
    T2,
    Flair,
    Pd,
    T2Star,
    Swi,
    Dwi,
}

impl Modality {
    pub const ALL: [Modality; 7] = [
        Modality::T1,
        Modality::T2,
        Modality::Flair,
        Modality::Pd,
        Modality::T2Star,
        Modality::Swi,
        Modality::Dwi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::T1 => "T1",
            Modality::T2 => "T2",
            Modality::Flair => "FLAIR",
            Modality::Pd => "PD",
            Modality::T2Star => "T2STAR",
            Modality::Swi => "SWI",
            Modality::Dwi => "DWI",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Data(format!("unknown modality `{s}`")))
    }
}

/// A 3-D scan, x varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub dims: [usize; 3],
    /// Voxel extent in millimetres.
    pub voxel_size: [f32; 3],
    pub data: Vec<f32>,
    pub modality: Option<Modality>,
    pub subject_id: String,
}

impl Volume {
    pub fn new(dims: [usize; 3], voxel_size: [f32; 3], data: Vec<f32>) -> Result<Self> {
        let v = Volume {
            dims,
            voxel_size,
            data,
            modality: None,
            subject_id: String::new(),
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::Data(format!("volume dims {:?} must all be >= 1", self.dims)));
        }
        if self.voxel_size.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Data(format!(
                "voxel size {:?} must be positive",
                self.voxel_size
            )));
        }
        let n: usize = self.dims.iter().product();
        if n != self.data.len() {
            return Err(Error::Data(format!(
                "volume dims {:?} need {} voxels, data has {}",
                self.dims,
                n,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("volume contains non-finite voxels".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.index(x, y, z)]
    }

    pub fn is_isotropic(&self) -> bool {
        self.voxel_size[0] == self.voxel_size[1] && self.voxel_size[1] == self.voxel_size[2]
    }

    pub fn with_subject(mut self, id: impl Into<String>) -> Self {
        self.subject_id = id.into();
        self
    }
}
