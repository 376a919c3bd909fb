use super::{LabelMap, Plane, Volume};

pub const LOWER_PERCENTILE: f64 = 0.1;
pub const UPPER_PERCENTILE: f64 = 99.9;

/// Percentile `q` (0..=100) of sorted values, linearly interpolating between
/// order statistics at rank `q/100 * (n-1)`.
pub fn percentile_sorted(sorted: &[f32], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let rank = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let a = sorted[lo] as f64;
    let b = sorted[hi] as f64;
    a + (b - a) * (rank - lo as f64)
}

/// The (0.1, 99.9) clamp bounds of a set of values.
pub fn clamp_bounds(values: &[f32]) -> (f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(f32::total_cmp);
    (
        percentile_sorted(&sorted, LOWER_PERCENTILE),
        percentile_sorted(&sorted, UPPER_PERCENTILE),
    )
}

pub fn volume_clamp_bounds(v: &Volume) -> (f64, f64) {
    clamp_bounds(&v.data)
}

/// Clamp to percentile bounds, min-max normalize to [0,1], then resize the
/// longer side to `size` and zero-pad to a `size`×`size` square.
pub fn preprocess_slice(raw: &Plane, size: usize) -> Plane {
    preprocess_slice_with_bounds(raw, size, clamp_bounds(&raw.data))
}

pub fn preprocess_slice_with_bounds(raw: &Plane, size: usize, (lo, hi): (f64, f64)) -> Plane {
    let normalized: Vec<f32> = if hi > lo {
        raw.data
            .iter()
            .map(|&v| ((v as f64).clamp(lo, hi) - lo) as f32 / (hi - lo) as f32)
            .map(|v| v.clamp(0.0, 1.0))
            .collect()
    } else {
        vec![0.0; raw.data.len()]
    };
    let plane = Plane {
        height: raw.height,
        width: raw.width,
        data: normalized,
    };
    resize_pad(&plane, size)
}

/// Sample positions mapping output index `o` to `o * (n-1)/(m-1)`, so the
/// first and last samples land exactly on the input corners.
fn corner_taps(n: usize, m: usize) -> Vec<(usize, usize, f64)> {
    (0..m)
        .map(|o| {
            if m == 1 || n == 1 {
                return (0, 0, 0.0);
            }
            let src = o as f64 * (n - 1) as f64 / (m - 1) as f64;
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Align-corners bilinear resize of a row-major plane.
pub fn resize_bilinear_corners(src: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    let ty = corner_taps(h, oh);
    let tx = corner_taps(w, ow);
    let mut out = Vec::with_capacity(oh * ow);
    for &(y0, y1, fy) in &ty {
        for &(x0, x1, fx) in &tx {
            let at = |y: usize, x: usize| src[y * w + x] as f64;
            let top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * fx;
            let bot = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * fx;
            out.push((top + (bot - top) * fy) as f32);
        }
    }
    out
}

/// Nearest-neighbour resize on the align-corners grid.
pub fn resize_nearest_corners<V: Copy>(src: &[V], h: usize, w: usize, oh: usize, ow: usize) -> Vec<V> {
    let near = |n: usize, m: usize, o: usize| {
        if m == 1 || n == 1 {
            0
        } else {
            ((o as f64 * (n - 1) as f64 / (m - 1) as f64).round() as usize).min(n - 1)
        }
    };
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        let sy = near(h, oh, y);
        for x in 0..ow {
            out.push(src[sy * w + near(w, ow, x)]);
        }
    }
    out
}

fn fitted_extent(h: usize, w: usize, size: usize) -> (usize, usize) {
    if h >= w {
        let nw = ((w as f64 * size as f64 / h as f64).round() as usize).clamp(1, size);
        (size, nw)
    } else {
        let nh = ((h as f64 * size as f64 / w as f64).round() as usize).clamp(1, size);
        (nh, size)
    }
}

fn pad_into<V: Copy + Default>(src: &[V], h: usize, w: usize, size: usize) -> Vec<V> {
    let top = (size - h) / 2;
    let left = (size - w) / 2;
    let mut out = vec![V::default(); size * size];
    for r in 0..h {
        out[(top + r) * size + left..(top + r) * size + left + w]
            .copy_from_slice(&src[r * w..(r + 1) * w]);
    }
    out
}

/// Aspect-preserving bilinear resize followed by symmetric zero padding.
pub fn resize_pad(p: &Plane, size: usize) -> Plane {
    if p.height == size && p.width == size {
        return p.clone();
    }
    let (nh, nw) = fitted_extent(p.height, p.width, size);
    let resized = resize_bilinear_corners(&p.data, p.height, p.width, nh, nw);
    Plane {
        height: size,
        width: size,
        data: pad_into(&resized, nh, nw, size),
    }
}

/// Nearest-neighbour counterpart of [`resize_pad`] for label maps.
pub fn resize_pad_labels(m: &LabelMap, size: usize) -> LabelMap {
    if m.height == size && m.width == size {
        return m.clone();
    }
    let (nh, nw) = fitted_extent(m.height, m.width, size);
    let resized = resize_nearest_corners(&m.data, m.height, m.width, nh, nw);
    LabelMap {
        height: size,
        width: size,
        data: pad_into(&resized, nh, nw, size),
    }
}
