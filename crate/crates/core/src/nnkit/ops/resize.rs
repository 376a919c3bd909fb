use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

/// Per-output-index interpolation taps `(i0, i1, frac)` for half-pixel
/// bilinear resampling of `input` samples onto `output` samples.
pub(crate) fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            if input == output {
                return (o, o, 0.0);
            }
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Nearest-neighbour source index for each output index.
pub(crate) fn nearest_taps(input: usize, output: usize) -> Vec<usize> {
    (0..output)
        .map(|o| ((o * input) / output).min(input - 1))
        .collect()
}

/// Bilinear resampling of one `h × w` plane.
pub(crate) fn bilinear_plane<T: Element>(src: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    let ty = bilinear_taps(h, oh);
    let tx = bilinear_taps(w, ow);
    let mut out = Vec::with_capacity(oh * ow);
    for &(y0, y1, fy) in &ty {
        let fy = T::from_f64(fy);
        for &(x0, x1, fx) in &tx {
            let fx = T::from_f64(fx);
            let top = src[y0 * w + x0] + (src[y0 * w + x1] - src[y0 * w + x0]) * fx;
            let bot = src[y1 * w + x0] + (src[y1 * w + x1] - src[y1 * w + x0]) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    out
}

fn bilinear_plane_backward<T: Element>(g: &[T], dst: &mut [T], w: usize, ty: &[(usize, usize, f64)], tx: &[(usize, usize, f64)]) {
    let ow = tx.len();
    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
        let fy = T::from_f64(fy);
        for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
            let fx = T::from_f64(fx);
            let gv = g[oy * ow + ox];
            let gt = gv * (T::one() - fy);
            let gb = gv * fy;
            dst[y0 * w + x0] = dst[y0 * w + x0] + gt * (T::one() - fx);
            dst[y0 * w + x1] = dst[y0 * w + x1] + gt * fx;
            dst[y1 * w + x0] = dst[y1 * w + x0] + gb * (T::one() - fx);
            dst[y1 * w + x1] = dst[y1 * w + x1] + gb * fx;
        }
    }
}

fn nchw(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    if shape.len() != 4 {
        return Err(Error::shape(op, format!("expected NCHW, got {:?}", shape)));
    }
    Ok((shape[0], shape[1], shape[2], shape[3]))
}

impl<'t, T: Element> Var<'t, T> {
    /// Bilinear resize of `[N, C, H, W]` to `[N, C, oh, ow]` (half-pixel centres).
    pub fn resize_bilinear(self, oh: usize, ow: usize) -> Result<Var<'t, T>> {
        let (n, c, h, w) = nchw("resize_bilinear", &self.shape())?;
        if oh == 0 || ow == 0 || h == 0 || w == 0 {
            return Err(Error::shape("resize_bilinear", "zero-sized plane"));
        }
        let x = self.value();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in x.data().chunks(h * w) {
            out.extend(bilinear_plane(plane, h, w, oh, ow));
        }
        let ty = bilinear_taps(h, oh);
        let tx = bilinear_taps(w, ow);
        self.tape().record(
            "resize_bilinear",
            &[self],
            Tensor::from_parts(vec![n, c, oh, ow], out),
            Box::new(move |g, ins, _, _| {
                let mut gx = Tensor::zeros(ins[0].shape().to_vec());
                for (gp, dp) in g.data().chunks(oh * ow).zip(gx.data_mut().chunks_mut(h * w)) {
                    bilinear_plane_backward(gp, dp, w, &ty, &tx);
                }
                vec![Some(gx)]
            }),
        )
    }

    pub fn upsample_bilinear2x(self) -> Result<Var<'t, T>> {
        let (_, _, h, w) = nchw("upsample_bilinear2x", &self.shape())?;
        self.resize_bilinear(2 * h, 2 * w)
    }

    /// Nearest-neighbour 2× upsampling.
    pub fn upsample_nearest2x(self) -> Result<Var<'t, T>> {
        let (n, c, h, w) = nchw("upsample_nearest2x", &self.shape())?;
        let (oh, ow) = (2 * h, 2 * w);
        let x = self.value();
        let mut out = Vec::with_capacity(n * c * oh * ow);
        for plane in x.data().chunks(h * w) {
            for oy in 0..oh {
                for ox in 0..ow {
                    out.push(plane[(oy / 2) * w + ox / 2]);
                }
            }
        }
        self.tape().record(
            "upsample_nearest2x",
            &[self],
            Tensor::from_parts(vec![n, c, oh, ow], out),
            Box::new(move |g, ins, _, _| {
                let mut gx = Tensor::zeros(ins[0].shape().to_vec());
                for (gp, dp) in g.data().chunks(oh * ow).zip(gx.data_mut().chunks_mut(h * w)) {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let d = (oy / 2) * w + ox / 2;
                            dp[d] = dp[d] + gp[oy * ow + ox];
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}
