use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

impl<'t, T: Element> Var<'t, T> {
    /// 2×2 max pooling with stride 2 over `[N, C, H, W]`; odd trailing rows
    /// and columns are dropped. Ties route the gradient to the first maximum
    /// in row-major order.
    pub fn max_pool2x2(self) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if shape.len() != 4 || shape[2] < 2 || shape[3] < 2 {
            return Err(Error::shape("max_pool2x2", format!("input {:?}", shape)));
        }
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let (ho, wo) = (h / 2, w / 2);
        let x = self.value();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if x.data()[i] > x.data()[best] {
                            best = i;
                        }
                    }
                    out.push(x.data()[best]);
                    argmax.push(best);
                }
            }
        }
        self.tape().record(
            "max_pool2x2",
            &[self],
            Tensor::from_parts(vec![n, c, ho, wo], out),
            Box::new(move |g, ins, _, _| {
                let mut gx = Tensor::zeros(ins[0].shape().to_vec());
                let d = gx.data_mut();
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    d[src] = d[src] + gv;
                }
                vec![Some(gx)]
            }),
        )
    }
}
