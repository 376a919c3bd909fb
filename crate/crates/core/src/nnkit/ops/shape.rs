use crate::nnkit::tensor::{split_axis, strides};
use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

/// Copies `x` into the axis order given by `axes`.
pub(crate) fn permute_tensor<T: Element>(x: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    let shape = x.shape();
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n = x.numel();
    let mut out = Vec::with_capacity(n);
    let nd = out_shape.len();
    let mut idx = vec![0usize; nd];
    let src = x.data();
    let mut offset = 0usize;
    for _ in 0..n {
        out.push(src[offset]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            offset += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    Tensor::from_parts(out_shape, out)
}

impl<'t, T: Element> Var<'t, T> {
    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t, T>> {
        let shape = shape.into();
        let x = self.value();
        if shape.iter().product::<usize>() != x.numel() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {:?}", x.shape(), shape),
            ));
        }
        let y = Tensor::from_parts(shape, x.data().to_vec());
        self.tape().record(
            "reshape",
            &[self],
            y,
            Box::new(|g, ins, _, _| {
                vec![Some(Tensor::from_parts(
                    ins[0].shape().to_vec(),
                    g.data().to_vec(),
                ))]
            }),
        )
    }

    /// Reorders axes; `axes[i]` names the input axis that becomes output axis `i`.
    pub fn permute(self, axes: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let mut seen = vec![false; x.ndim()];
        if axes.len() != x.ndim() || axes.iter().any(|&a| a >= x.ndim() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape(
                "permute",
                format!("{:?} is not a permutation of {} axes", axes, x.ndim()),
            ));
        }
        let y = permute_tensor(&x, axes);
        let mut inverse = vec![0; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        self.tape().record(
            "permute",
            &[self],
            y,
            Box::new(move |g, _, _, _| vec![Some(permute_tensor(g, &inverse))]),
        )
    }

    /// Swaps the last two axes.
    pub fn transpose_last(self) -> Result<Var<'t, T>> {
        let nd = self.shape().len();
        if nd < 2 {
            return Err(Error::shape("transpose_last", "need at least 2 axes"));
        }
        let mut axes: Vec<usize> = (0..nd).collect();
        axes.swap(nd - 1, nd - 2);
        self.permute(&axes)
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape(
                "narrow",
                format!("range {}..{} on axis {} of {:?}", start, start + len, axis, shape),
            ));
        }
        let (outer, extent, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * extent * inner + start * inner;
            out.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        self.tape().record(
            "narrow",
            &[self],
            Tensor::from_parts(out_shape, out),
            Box::new(move |g, ins, _, _| {
                let mut gx = Tensor::zeros(ins[0].shape().to_vec());
                let d = gx.data_mut();
                for o in 0..outer {
                    let base = o * extent * inner + start * inner;
                    d[base..base + len * inner]
                        .copy_from_slice(&g.data()[o * len * inner..(o + 1) * len * inner]);
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Tiles along a new leading axis: `[..] -> [n, ..]`.
    pub fn repeat_leading(self, n: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let block = x.numel();
        let mut out = Vec::with_capacity(block * n);
        for _ in 0..n {
            out.extend_from_slice(x.data());
        }
        let mut shape = vec![n];
        shape.extend_from_slice(x.shape());
        self.tape().record(
            "repeat_leading",
            &[self],
            Tensor::from_parts(shape, out),
            Box::new(move |g, ins, _, _| {
                let mut acc = vec![T::zero(); block];
                for chunk in g.data().chunks(block.max(1)) {
                    for (a, &v) in acc.iter_mut().zip(chunk) {
                        *a = *a + v;
                    }
                }
                vec![Some(Tensor::from_parts(ins[0].shape().to_vec(), acc))]
            }),
        )
    }

    /// Concatenates along `axis`. All other extents must agree.
    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let tape = first.tape();
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {} of {:?}", axis, base)));
        }
        for v in &values[1..] {
            let s = v.shape();
            if s.len() != base.len()
                || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(Error::shape(
                    "concat",
                    format!("{:?} vs {:?} along axis {}", base, s, axis),
                ));
            }
        }
        let extents: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let total: usize = extents.iter().sum();
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (v, &e) in values.iter().zip(&extents) {
                out.extend_from_slice(&v.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        tape.record(
            "concat",
            parts,
            Tensor::from_parts(shape, out),
            Box::new(move |g, ins, _, needs| {
                let mut grads: Vec<Vec<T>> = extents
                    .iter()
                    .zip(needs)
                    .map(|(&e, &need)| if need { Vec::with_capacity(outer * e * inner) } else { Vec::new() })
                    .collect();
                let gd = g.data();
                let mut off = 0;
                for _ in 0..outer {
                    for (k, &e) in extents.iter().enumerate() {
                        if needs[k] {
                            grads[k].extend_from_slice(&gd[off..off + e * inner]);
                        }
                        off += e * inner;
                    }
                }
                grads
                    .into_iter()
                    .zip(ins)
                    .zip(needs)
                    .map(|((d, x), &need)| need.then(|| Tensor::from_parts(x.shape().to_vec(), d)))
                    .collect()
            }),
        )
    }

    /// Per-sample row gather: `x: [N, T, D]`, `index[n]` lists rows of sample
    /// `n` (all of equal length K) → `[N, K, D]`. Repeated indices accumulate
    /// gradient.
    pub fn gather_rows(self, index: &[Vec<usize>]) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if shape.len() != 3 || index.len() != shape[0] {
            return Err(Error::shape(
                "gather_rows",
                format!("input {:?} with {} index rows", shape, index.len()),
            ));
        }
        let (n, t, d) = (shape[0], shape[1], shape[2]);
        let k = index.first().map_or(0, Vec::len);
        if index.iter().any(|r| r.len() != k || r.iter().any(|&i| i >= t)) {
            return Err(Error::shape("gather_rows", "ragged or out-of-range index"));
        }
        let mut out = Vec::with_capacity(n * k * d);
        for (s, rows) in index.iter().enumerate() {
            for &r in rows {
                let b = (s * t + r) * d;
                out.extend_from_slice(&x.data()[b..b + d]);
            }
        }
        let index = index.to_vec();
        self.tape().record(
            "gather_rows",
            &[self],
            Tensor::from_parts(vec![n, k, d], out),
            Box::new(move |g, ins, _, _| {
                let mut gx = Tensor::zeros(ins[0].shape().to_vec());
                let gd = gx.data_mut();
                for (s, rows) in index.iter().enumerate() {
                    for (j, &r) in rows.iter().enumerate() {
                        let dst = (s * t + r) * d;
                        let src = (s * k + j) * d;
                        for q in 0..d {
                            gd[dst + q] = gd[dst + q] + g.data()[src + q];
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Picks one entry along `axis` per position: `labels` has the shape of
    /// `x` with `axis` removed (row-major), each value `< x.shape[axis]`.
    pub fn pick(self, axis: usize, labels: &[usize]) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("pick", format!("axis {} of {:?}", axis, shape)));
        }
        let (outer, extent, inner) = split_axis(&shape, axis);
        if labels.len() != outer * inner {
            return Err(Error::shape(
                "pick",
                format!("{} labels for {} positions", labels.len(), outer * inner),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= extent) {
            return Err(Error::Contract(format!(
                "label {} out of range for {} classes",
                bad, extent
            )));
        }
        let src = |o: usize, i: usize, l: usize| (o * extent + l) * inner + i;
        let mut out = Vec::with_capacity(labels.len());
        for o in 0..outer {
            for i in 0..inner {
                out.push(x.data()[src(o, i, labels[o * inner + i])]);
            }
        }
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        let labels = labels.to_vec();
        self.tape().record(
            "pick",
            &[self],
            Tensor::from_parts(out_shape, out),
            Box::new(move |g, ins, _, _| {
                let mut gx = Tensor::zeros(ins[0].shape().to_vec());
                let gd = gx.data_mut();
                for o in 0..outer {
                    for i in 0..inner {
                        let p = o * inner + i;
                        gd[(o * extent + labels[p]) * inner + i] = g.data()[p];
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permute_matches_index_arithmetic() {
        let x = Tensor::<f64>::from_fn(vec![2, 3, 4], |i| i as f64);
        let y = permute_tensor(&x, &[2, 0, 1]);
        assert_eq!(y.shape(), &[4, 2, 3]);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(y.data()[c * 6 + a * 3 + b], x.data()[a * 12 + b * 4 + c]);
                }
            }
        }
    }
}
