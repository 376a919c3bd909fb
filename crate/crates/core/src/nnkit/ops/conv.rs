use crate::nnkit::element::{gemm, MatView};
use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Visits `(col row, output position, input offset, len)` for every
    /// in-bounds run of taps; a run covers `len` consecutive output columns
    /// reading input at `stride` spacing.
    #[inline]
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize)) {
        let (s, p) = (self.stride as isize, self.pad as isize);
        for c in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (c * self.kh + ki) * self.kw + kj;
                    // ox valid when 0 <= ox*s + kj - p < w
                    let lo = ((p - kj as isize).max(0) + s - 1) / s;
                    let hi = ((self.w as isize - 1 - kj as isize + p).div_euclid(s) + 1).clamp(0, self.wo as isize);
                    if hi <= lo {
                        continue;
                    }
                    let (lo, len) = (lo as usize, (hi - lo as isize) as usize);
                    for oy in 0..self.ho {
                        let iy = (oy * self.stride + ki) as isize - p;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let ix = (lo * self.stride + kj) as isize - p;
                        let in_base = (c * self.h + iy as usize) * self.w + ix as usize;
                        f(row, oy * self.wo + lo, in_base, len);
                    }
                }
            }
        }
    }

    fn im2col<T: Element>(&self, x: &[T], cols: &mut [T]) {
        cols.fill(T::zero());
        let n = self.cols();
        let st = self.stride;
        self.for_each_run(|row, p, src, len| {
            let dst = &mut cols[row * n + p..row * n + p + len];
            if st == 1 {
                dst.copy_from_slice(&x[src..src + len]);
            } else {
                for (i, d) in dst.iter_mut().enumerate() {
                    *d = x[src + i * st];
                }
            }
        });
    }

    fn col2im<T: Element>(&self, cols: &[T], dx: &mut [T]) {
        let n = self.cols();
        let st = self.stride;
        self.for_each_run(|row, p, dst, len| {
            let src = &cols[row * n + p..row * n + p + len];
            for (i, &v) in src.iter().enumerate() {
                let d = &mut dx[dst + i * st];
                *d = *d + v;
            }
        });
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// 2-D cross-correlation with zero padding: `[N,C,H,W] ⋆ [K,C,kh,kw] + b[K]`.
    pub fn conv2d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t, T>> {
        let xs = self.shape();
        let ws = weight.shape();
        if xs.len() != 4 {
            return Err(Error::shape("conv2d", format!("input must be NCHW, got {:?}", xs)));
        }
        if ws.len() != 4 {
            return Err(Error::shape("conv2d", format!("kernel must be KCkhkw, got {:?}", ws)));
        }
        if stride == 0 {
            return Err(Error::Config("conv2d: stride must be at least 1".into()));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (k, kc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        if kc != c {
            return Err(Error::shape(
                "conv2d",
                format!("input channels {} != kernel channels {}", c, kc),
            ));
        }
        if kh > h + 2 * pad {
            return Err(Error::shape(
                "conv2d",
                format!("kernel height {} exceeds padded input height {}", kh, h + 2 * pad),
            ));
        }
        if kw > w + 2 * pad {
            return Err(Error::shape(
                "conv2d",
                format!("kernel width {} exceeds padded input width {}", kw, w + 2 * pad),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [k] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias {:?} for {} output channels", b.shape(), k),
                ));
            }
        }
        let geom = ConvGeom {
            c,
            h,
            w,
            kh,
            kw,
            stride,
            pad,
            ho: (h + 2 * pad - kh) / stride + 1,
            wo: (w + 2 * pad - kw) / stride + 1,
        };
        let (rows, cols) = (geom.rows(), geom.cols());
        let xv = self.value();
        let wv = weight.value();
        let bv = bias.map(|b| b.value());
        let in_sz = c * h * w;
        let out_sz = k * cols;
        let mut out = vec![T::zero(); n * out_sz];
        let mut colbuf = vec![T::zero(); if geom.is_pointwise() { 0 } else { rows * cols }];
        for s in 0..n {
            let xs = &xv.data()[s * in_sz..(s + 1) * in_sz];
            let colm: &[T] = if geom.is_pointwise() {
                xs
            } else {
                geom.im2col(xs, &mut colbuf);
                &colbuf
            };
            let o = &mut out[s * out_sz..(s + 1) * out_sz];
            if let Some(b) = &bv {
                for (kk, chunk) in o.chunks_mut(cols).enumerate() {
                    chunk.fill(b.data()[kk]);
                }
            }
            gemm(
                T::one(),
                wv.data(),
                MatView::row_major(k, rows),
                colm,
                MatView::row_major(rows, cols),
                T::one(),
                o,
                MatView::row_major(k, cols),
            );
        }
        let mut parents = vec![self, weight];
        parents.extend(bias);
        self.tape().record(
            "conv2d",
            &parents,
            Tensor::from_parts(vec![n, k, geom.ho, geom.wo], out),
            Box::new(move |g, ins, _, needs| {
                let (x, wt) = (ins[0], ins[1]);
                let mut dx = needs[0].then(|| vec![T::zero(); x.numel()]);
                let mut dw = needs[1].then(|| vec![T::zero(); wt.numel()]);
                let mut colbuf = vec![T::zero(); rows * cols];
                // Stride-1 square kernels: dx is the full correlation of the
                // output gradient with the flipped, channel-swapped kernel.
                let flipped = (!geom.is_pointwise() && geom.stride == 1 && kh == kw && geom.pad < kh && needs[0]).then(|| {
                    let wd = wt.data();
                    let mut wf = vec![T::zero(); wt.numel()];
                    for kk in 0..k {
                        for cc in 0..c {
                            for i in 0..kh {
                                for j in 0..kw {
                                    wf[((cc * k + kk) * kh + (kh - 1 - i)) * kw + (kw - 1 - j)] =
                                        wd[((kk * c + cc) * kh + i) * kw + j];
                                }
                            }
                        }
                    }
                    let tgeom = ConvGeom {
                        c: k,
                        h: geom.ho,
                        w: geom.wo,
                        kh,
                        kw,
                        stride: 1,
                        pad: kh - 1 - geom.pad,
                        ho: geom.h,
                        wo: geom.w,
                    };
                    (wf, tgeom)
                });
                let dcol_len = match (&flipped, geom.is_pointwise()) {
                    (Some((_, tg)), _) => tg.rows() * tg.cols(),
                    (None, false) => rows * cols,
                    (None, true) => 0,
                };
                let mut dcol = vec![T::zero(); dcol_len];
                for s in 0..n {
                    let go = &g.data()[s * out_sz..(s + 1) * out_sz];
                    if let Some(dw) = dw.as_mut() {
                        let xs = &x.data()[s * in_sz..(s + 1) * in_sz];
                        let colm: &[T] = if geom.is_pointwise() {
                            xs
                        } else {
                            geom.im2col(xs, &mut colbuf);
                            &colbuf
                        };
                        gemm(
                            T::one(),
                            go,
                            MatView::row_major(k, cols),
                            colm,
                            MatView::row_major(rows, cols).t(),
                            T::one(),
                            dw,
                            MatView::row_major(k, rows),
                        );
                    }
                    if let Some(dx) = dx.as_mut() {
                        let dxs = &mut dx[s * in_sz..(s + 1) * in_sz];
                        if geom.is_pointwise() {
                            gemm(
                                T::one(),
                                wt.data(),
                                MatView::row_major(k, rows).t(),
                                go,
                                MatView::row_major(k, cols),
                                T::one(),
                                dxs,
                                MatView::row_major(rows, cols),
                            );
                        } else if let Some((wf, tg)) = &flipped {
                            tg.im2col(go, &mut dcol);
                            gemm(
                                T::one(),
                                wf,
                                MatView::row_major(c, tg.rows()),
                                &dcol,
                                MatView::row_major(tg.rows(), tg.cols()),
                                T::one(),
                                dxs,
                                MatView::row_major(c, tg.cols()),
                            );
                        } else {
                            gemm(
                                T::one(),
                                wt.data(),
                                MatView::row_major(k, rows).t(),
                                go,
                                MatView::row_major(k, cols),
                                T::zero(),
                                &mut dcol,
                                MatView::row_major(rows, cols),
                            );
                            geom.col2im(&dcol, dxs);
                        }
                    }
                }
                let mut grads = vec![
                    dx.map(|d| Tensor::from_parts(x.shape().to_vec(), d)),
                    dw.map(|d| Tensor::from_parts(wt.shape().to_vec(), d)),
                ];
                if ins.len() == 3 {
                    grads.push(needs[2].then(|| {
                        let mut db = vec![T::zero(); k];
                        for s in 0..n {
                            for (kk, chunk) in g.data()[s * out_sz..(s + 1) * out_sz]
                                .chunks(cols)
                                .enumerate()
                            {
                                db[kk] = db[kk] + chunk.iter().copied().sum::<T>();
                            }
                        }
                        Tensor::from_parts(vec![k], db)
                    }));
                }
                grads
            }),
        )
    }
}
