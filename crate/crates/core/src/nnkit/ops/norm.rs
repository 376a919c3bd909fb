use std::sync::Arc;

use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

/// Normalisation over contiguous blocks of `block` elements followed by a
/// per-channel affine map; `channel(b, j)` names the affine slot of element
/// `j` in block `b`.
#[derive(Clone)]
struct BlockNorm {
    block: usize,
    eps: f64,
    channel: Arc<dyn Fn(usize, usize) -> usize + Send + Sync>,
}

impl BlockNorm {
    fn stats<T: Element>(&self, xs: &[T]) -> (T, T) {
        let n = T::from_f64(xs.len() as f64);
        let mean = xs.iter().copied().sum::<T>() / n;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        (mean, (var + T::from_f64(self.eps)).sqrt())
    }

    fn forward<T: Element>(&self, x: &[T], gamma: &[T], beta: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(x.len());
        for (b, xs) in x.chunks(self.block).enumerate() {
            let (mean, sd) = self.stats(xs);
            for (j, &v) in xs.iter().enumerate() {
                let c = (self.channel)(b, j);
                out.push((v - mean) / sd * gamma[c] + beta[c]);
            }
        }
        out
    }

    fn backward<T: Element>(
        &self,
        g: &[T],
        x: &[T],
        gamma: &[T],
        needs: &[bool],
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        let mut dx = vec![T::zero(); if needs[0] { x.len() } else { 0 }];
        let mut dgamma = vec![T::zero(); gamma.len()];
        let mut dbeta = vec![T::zero(); gamma.len()];
        let n = T::from_f64(self.block as f64);
        let mut xhat = vec![T::zero(); self.block];
        let mut dxhat = vec![T::zero(); self.block];
        for (b, (xs, gs)) in x.chunks(self.block).zip(g.chunks(self.block)).enumerate() {
            let (mean, sd) = self.stats(xs);
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for j in 0..xs.len() {
                let c = (self.channel)(b, j);
                xhat[j] = (xs[j] - mean) / sd;
                dxhat[j] = gs[j] * gamma[c];
                dgamma[c] = dgamma[c] + gs[j] * xhat[j];
                dbeta[c] = dbeta[c] + gs[j];
                s1 = s1 + dxhat[j];
                s2 = s2 + dxhat[j] * xhat[j];
            }
            if needs[0] {
                let base = b * self.block;
                for j in 0..xs.len() {
                    dx[base + j] = (dxhat[j] - s1 / n - xhat[j] * s2 / n) / sd;
                }
            }
        }
        (dx, dgamma, dbeta)
    }
}

fn record_norm<'t, T: Element>(
    op: &'static str,
    x: Var<'t, T>,
    gamma: Var<'t, T>,
    beta: Var<'t, T>,
    norm: BlockNorm,
) -> Result<Var<'t, T>> {
    let xv = x.value();
    let out = norm.forward(xv.data(), gamma.value().data(), beta.value().data());
    x.tape().record(
        op,
        &[x, gamma, beta],
        Tensor::from_parts(xv.shape().to_vec(), out),
        Box::new(move |g, ins, _, needs| {
            let (dx, dg, db) = norm.backward(g.data(), ins[0].data(), ins[1].data(), needs);
            vec![
                needs[0].then(|| Tensor::from_parts(ins[0].shape().to_vec(), dx)),
                needs[1].then(|| Tensor::from_parts(ins[1].shape().to_vec(), dg)),
                needs[2].then(|| Tensor::from_parts(ins[2].shape().to_vec(), db)),
            ]
        }),
    )
}

impl<'t, T: Element> Var<'t, T> {
    /// Layer normalisation over the last axis.
    pub fn layer_norm(self, gamma: Var<'t, T>, beta: Var<'t, T>, eps: f64) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let d = *shape.last().ok_or_else(|| Error::shape("layer_norm", "scalar input"))?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::shape(
                "layer_norm",
                format!("affine {:?}/{:?} for feature size {}", gamma.shape(), beta.shape(), d),
            ));
        }
        let norm = BlockNorm {
            block: d,
            eps,
            channel: Arc::new(|_, j| j),
        };
        record_norm("layer_norm", self, gamma, beta, norm)
    }

    /// Group normalisation of `[N, C, H, W]` with `groups` channel groups.
    pub fn group_norm(
        self,
        groups: usize,
        gamma: Var<'t, T>,
        beta: Var<'t, T>,
        eps: f64,
    ) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if shape.len() != 4 {
            return Err(Error::shape("group_norm", format!("expected NCHW, got {:?}", shape)));
        }
        let c = shape[1];
        if groups == 0 || c % groups != 0 {
            return Err(Error::Config(format!(
                "group_norm: {} channels not divisible into {} groups",
                c, groups
            )));
        }
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::shape(
                "group_norm",
                format!("affine {:?} for {} channels", gamma.shape(), c),
            ));
        }
        let hw = shape[2] * shape[3];
        let per_group = c / groups;
        let norm = BlockNorm {
            block: per_group * hw,
            eps,
            channel: Arc::new(move |b, j| (b % groups) * per_group + j / hw),
        };
        record_norm("group_norm", self, gamma, beta, norm)
    }
}
