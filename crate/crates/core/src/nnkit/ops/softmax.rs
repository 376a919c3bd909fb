use crate::nnkit::tensor::split_axis;
use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::shape(op, format!("axis {} of {:?}", axis, shape)));
    }
    Ok(())
}

/// Visits each 1-D fibre along an axis as an iterator of flat indices.
fn for_each_fibre(shape: &[usize], axis: usize, mut f: impl FnMut(&[usize])) {
    let (outer, extent, inner) = split_axis(shape, axis);
    let mut idx = vec![0; extent];
    for o in 0..outer {
        for i in 0..inner {
            for (c, slot) in idx.iter_mut().enumerate() {
                *slot = (o * extent + c) * inner + i;
            }
            f(&idx);
        }
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// Max-subtracted softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        check_axis("softmax", &shape, axis)?;
        let mut out = vec![T::zero(); x.numel()];
        for_each_fibre(&shape, axis, |idx| {
            let mx = idx.iter().map(|&i| x.data()[i]).fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for &i in idx {
                let e = (x.data()[i] - mx).exp();
                out[i] = e;
                s = s + e;
            }
            for &i in idx {
                out[i] = out[i] / s;
            }
        });
        let shape_c = shape.clone();
        self.tape().record(
            "softmax",
            &[self],
            Tensor::from_parts(shape, out),
            Box::new(move |g, _, y, _| {
                let mut gx = vec![T::zero(); y.numel()];
                for_each_fibre(&shape_c, axis, |idx| {
                    let dot: T = idx.iter().map(|&i| g.data()[i] * y.data()[i]).sum();
                    for &i in idx {
                        gx[i] = y.data()[i] * (g.data()[i] - dot);
                    }
                });
                vec![Some(Tensor::from_parts(shape_c.clone(), gx))]
            }),
        )
    }

    /// `x - logsumexp(x)` along `axis`, with max subtraction.
    pub fn log_softmax(self, axis: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        check_axis("log_softmax", &shape, axis)?;
        let mut out = vec![T::zero(); x.numel()];
        for_each_fibre(&shape, axis, |idx| {
            let mx = idx.iter().map(|&i| x.data()[i]).fold(T::neg_infinity(), T::max);
            let s: T = idx.iter().map(|&i| (x.data()[i] - mx).exp()).sum();
            let lse = mx + s.ln();
            for &i in idx {
                out[i] = x.data()[i] - lse;
            }
        });
        let shape_c = shape.clone();
        self.tape().record(
            "log_softmax",
            &[self],
            Tensor::from_parts(shape, out),
            Box::new(move |g, _, y, _| {
                let mut gx = vec![T::zero(); y.numel()];
                for_each_fibre(&shape_c, axis, |idx| {
                    let gs: T = idx.iter().map(|&i| g.data()[i]).sum();
                    for &i in idx {
                        gx[i] = g.data()[i] - y.data()[i].exp() * gs;
                    }
                });
                vec![Some(Tensor::from_parts(shape_c.clone(), gx))]
            }),
        )
    }
}
