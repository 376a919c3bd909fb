//! Volume ingestion, slicing, preprocessing, augmentation and sampling.

mod augment;
mod coverage;
mod loader;
mod manifest;
mod nifti;
pub(crate) mod preprocess;
mod raw;
mod resample;
mod sampling;
mod slices;
pub mod synth;
mod volume;

pub use augment::{augment, AugmentPolicy};
pub use coverage::{brain_coverage, brain_coverage_weight, CoverageWeighting};
pub use loader::{load_records, LoadOptions, PercentileScope};
pub use manifest::{read_manifest, write_manifest, DatasetIndex, IndexEntry, LabelRef, ManifestEntry};
pub use nifti::{parse_nifti1, read_nifti1_file, write_nifti1, write_nifti1_file};
pub use preprocess::{
    clamp_bounds, percentile_sorted, preprocess_slice, preprocess_slice_with_bounds, resize_bilinear_corners, resize_pad,
    resize_pad_labels, volume_clamp_bounds,
};
pub use raw::{read_raw_volume, read_volume, write_raw_volume, RawSidecar};
pub use resample::{resample_isotropic, resample_isotropic_nearest};
pub use sampling::{few_shot_sample, first_volumes};
pub use slices::{extract_slices, slice_plane, stride_indices, LabelMap, Plane, RawSlice, SliceRecord, SliceSource};
pub use volume::{Modality, Volume};
