use crate::nnkit::element::{gemm, MatView};
use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

/// One `[m,k]·[k,n]` (or `[m,k]·[n,k]ᵀ`) product with gradients, shared by
/// `matmul` and `bmm`.
#[derive(Clone, Copy)]
struct Dims {
    m: usize,
    k: usize,
    n: usize,
    trans_b: bool,
}

impl Dims {
    fn b_view(&self) -> MatView {
        if self.trans_b {
            MatView::row_major(self.n, self.k).t()
        } else {
            MatView::row_major(self.k, self.n)
        }
    }

    fn forward<T: Element>(&self, a: &[T], b: &[T], c: &mut [T]) {
        gemm(
            T::one(),
            a,
            MatView::row_major(self.m, self.k),
            b,
            self.b_view(),
            T::zero(),
            c,
            MatView::row_major(self.m, self.n),
        );
    }

    /// `da += dc · bᵀ` (as stored).
    fn grad_a<T: Element>(&self, dc: &[T], b: &[T], da: &mut [T]) {
        gemm(
            T::one(),
            dc,
            MatView::row_major(self.m, self.n),
            b,
            self.b_view().t(),
            T::one(),
            da,
            MatView::row_major(self.m, self.k),
        );
    }

    /// `db += aᵀ · dc`, or `dcᵀ · a` when b is stored transposed.
    fn grad_b<T: Element>(&self, a: &[T], dc: &[T], db: &mut [T]) {
        if self.trans_b {
            gemm(
                T::one(),
                dc,
                MatView::row_major(self.m, self.n).t(),
                a,
                MatView::row_major(self.m, self.k),
                T::one(),
                db,
                MatView::row_major(self.n, self.k),
            );
        } else {
            gemm(
                T::one(),
                a,
                MatView::row_major(self.m, self.k).t(),
                dc,
                MatView::row_major(self.m, self.n),
                T::one(),
                db,
                MatView::row_major(self.k, self.n),
            );
        }
    }
}

impl<'t, T: Element> Var<'t, T> {
    /// `[.., M, K] · [K, N]`, or `· [N, K]ᵀ` with `trans_b`. Leading axes of
    /// `self` are flattened into rows.
    pub fn matmul(self, b: Var<'t, T>, trans_b: bool) -> Result<Var<'t, T>> {
        let (av, bv) = (self.value(), b.value());
        let (ash, bsh) = (av.shape().to_vec(), bv.shape().to_vec());
        if ash.is_empty() || bsh.len() != 2 {
            return Err(Error::shape("matmul", format!("{:?} · {:?}", ash, bsh)));
        }
        let k = *ash.last().unwrap();
        let (bk, n) = if trans_b { (bsh[1], bsh[0]) } else { (bsh[0], bsh[1]) };
        if k != bk {
            return Err(Error::shape(
                "matmul",
                format!("inner dimension {} vs {} ({:?} · {:?}, trans_b={})", k, bk, ash, bsh, trans_b),
            ));
        }
        let m = av.numel() / k.max(1);
        let dims = Dims { m, k, n, trans_b };
        let mut out = vec![T::zero(); m * n];
        dims.forward(av.data(), bv.data(), &mut out);
        let mut out_shape = ash.clone();
        *out_shape.last_mut().unwrap() = n;
        self.tape().record(
            "matmul",
            &[self, b],
            Tensor::from_parts(out_shape, out),
            Box::new(move |g, ins, _, needs| {
                let ga = needs[0].then(|| {
                    let mut da = Tensor::zeros(ins[0].shape().to_vec());
                    dims.grad_a(g.data(), ins[1].data(), da.data_mut());
                    da
                });
                let gb = needs[1].then(|| {
                    let mut db = Tensor::zeros(ins[1].shape().to_vec());
                    dims.grad_b(ins[0].data(), g.data(), db.data_mut());
                    db
                });
                vec![ga, gb]
            }),
        )
    }

    /// Batched product `[B, M, K] · [B, K, N]` (or `[B, N, K]ᵀ` with `trans_b`).
    pub fn bmm(self, b: Var<'t, T>, trans_b: bool) -> Result<Var<'t, T>> {
        let (av, bv) = (self.value(), b.value());
        let (ash, bsh) = (av.shape().to_vec(), bv.shape().to_vec());
        if ash.len() != 3 || bsh.len() != 3 || ash[0] != bsh[0] {
            return Err(Error::shape("bmm", format!("{:?} · {:?}", ash, bsh)));
        }
        let (batch, m, k) = (ash[0], ash[1], ash[2]);
        let (bk, n) = if trans_b { (bsh[2], bsh[1]) } else { (bsh[1], bsh[2]) };
        if k != bk {
            return Err(Error::shape(
                "bmm",
                format!("inner dimension {} vs {} ({:?} · {:?})", k, bk, ash, bsh),
            ));
        }
        let dims = Dims { m, k, n, trans_b };
        let (sa, sb, sc) = (m * k, k * n, m * n);
        let mut out = vec![T::zero(); batch * sc];
        for i in 0..batch {
            dims.forward(
                &av.data()[i * sa..(i + 1) * sa],
                &bv.data()[i * sb..(i + 1) * sb],
                &mut out[i * sc..(i + 1) * sc],
            );
        }
        self.tape().record(
            "bmm",
            &[self, b],
            Tensor::from_parts(vec![batch, m, n], out),
            Box::new(move |g, ins, _, needs| {
                let gd = g.data();
                let ga = needs[0].then(|| {
                    let mut da = Tensor::zeros(ins[0].shape().to_vec());
                    for i in 0..batch {
                        dims.grad_a(
                            &gd[i * sc..(i + 1) * sc],
                            &ins[1].data()[i * sb..(i + 1) * sb],
                            &mut da.data_mut()[i * sa..(i + 1) * sa],
                        );
                    }
                    da
                });
                let gb = needs[1].then(|| {
                    let mut db = Tensor::zeros(ins[1].shape().to_vec());
                    for i in 0..batch {
                        dims.grad_b(
                            &ins[0].data()[i * sa..(i + 1) * sa],
                            &gd[i * sc..(i + 1) * sc],
                            &mut db.data_mut()[i * sb..(i + 1) * sb],
                        );
                    }
                    db
                });
                vec![ga, gb]
            }),
        )
    }

    /// `x · wᵀ + b` with `w: [out, in]`, `b: [out]`.
    pub fn linear(self, w: Var<'t, T>, b: Option<Var<'t, T>>) -> Result<Var<'t, T>> {
        let y = self.matmul(w, true)?;
        match b {
            Some(b) => y.add_broadcast(b),
            None => Ok(y),
        }
    }
}
