use super::Volume;
use crate::nnkit::ops::resize::{bilinear_taps, nearest_taps};

fn target_dims(v: &Volume) -> ([usize; 3], f32) {
    let target = v.voxel_size.iter().copied().fold(f32::INFINITY, f32::min);
    let mut dims = [0; 3];
    for a in 0..3 {
        let scaled = v.dims[a] as f64 * v.voxel_size[a] as f64 / target as f64;
        dims[a] = (scaled.round() as usize).max(1);
    }
    (dims, target)
}

/// Trilinear resampling to isotropic voxels at the finest input spacing.
pub fn resample_isotropic(v: &Volume) -> Volume {
    if v.is_isotropic() {
        return v.clone();
    }
    let (dims, target) = target_dims(v);
    let tx = bilinear_taps(v.dims[0], dims[0]);
    let ty = bilinear_taps(v.dims[1], dims[1]);
    let tz = bilinear_taps(v.dims[2], dims[2]);
    let mut data = Vec::with_capacity(dims.iter().product());
    for &(z0, z1, fz) in &tz {
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let lerp = |a: f32, b: f32, t: f64| a as f64 + (b as f64 - a as f64) * t;
                let plane = |z: usize| {
                    let r0 = lerp(v.get(x0, y0, z), v.get(x1, y0, z), fx);
                    let r1 = lerp(v.get(x0, y1, z), v.get(x1, y1, z), fx);
                    r0 + (r1 - r0) * fy
                };
                let p0 = plane(z0);
                let p1 = plane(z1);
                data.push((p0 + (p1 - p0) * fz) as f32);
            }
        }
    }
    Volume {
        dims,
        voxel_size: [target; 3],
        data,
        modality: v.modality,
        subject_id: v.subject_id.clone(),
    }
}

/// Nearest-neighbour variant of [`resample_isotropic`] for label volumes.
pub fn resample_isotropic_nearest(v: &Volume) -> Volume {
    if v.is_isotropic() {
        return v.clone();
    }
    let (dims, target) = target_dims(v);
    let tx = nearest_taps(v.dims[0], dims[0]);
    let ty = nearest_taps(v.dims[1], dims[1]);
    let tz = nearest_taps(v.dims[2], dims[2]);
    let mut data = Vec::with_capacity(dims.iter().product());
    for &z in &tz {
        for &y in &ty {
            for &x in &tx {
                data.push(v.get(x, y, z));
            }
        }
    }
    Volume {
        dims,
        voxel_size: [target; 3],
        data,
        modality: v.modality,
        subject_id: v.subject_id.clone(),
    }
}
