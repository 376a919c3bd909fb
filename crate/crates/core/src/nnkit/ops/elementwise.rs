use crate::nnkit::{Element, Tensor, Var};
use crate::{Error, Result};

fn zip_map<T: Element>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::from_parts(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

impl<'t, T: Element> Var<'t, T> {
    fn same_shape(self, other: Var<'t, T>, op: &'static str) -> Result<()> {
        let (a, b) = (self.shape(), other.shape());
        if a != b {
            return Err(Error::shape(op, format!("{:?} vs {:?}", a, b)));
        }
        Ok(())
    }

    fn unary(
        self,
        op: &'static str,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Result<Var<'t, T>> {
        let y = self.value().map(f);
        self.tape().record(
            op,
            &[self],
            y,
            Box::new(move |g, ins, out, _| {
                let data = g
                    .data()
                    .iter()
                    .zip(ins[0].data())
                    .zip(out.data())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
            }),
        )
    }

    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_shape(other, "add")?;
        let y = zip_map(&self.value(), &other.value(), |a, b| a + b);
        self.tape().record(
            "add",
            &[self, other],
            y,
            Box::new(|g, _, _, needs| {
                vec![needs[0].then(|| g.clone()), needs[1].then(|| g.clone())]
            }),
        )
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_shape(other, "sub")?;
        let y = zip_map(&self.value(), &other.value(), |a, b| a - b);
        self.tape().record(
            "sub",
            &[self, other],
            y,
            Box::new(|g, _, _, needs| {
                vec![needs[0].then(|| g.clone()), needs[1].then(|| g.map(|v| -v))]
            }),
        )
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_shape(other, "mul")?;
        let y = zip_map(&self.value(), &other.value(), |a, b| a * b);
        self.tape().record(
            "mul",
            &[self, other],
            y,
            Box::new(|g, ins, _, needs| {
                vec![
                    needs[0].then(|| zip_map(g, ins[1], |g, b| g * b)),
                    needs[1].then(|| zip_map(g, ins[0], |g, a| g * a)),
                ]
            }),
        )
    }

    pub fn div(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.same_shape(other, "div")?;
        let y = zip_map(&self.value(), &other.value(), |a, b| a / b);
        self.tape().record(
            "div",
            &[self, other],
            y,
            Box::new(|g, ins, out, needs| {
                vec![
                    needs[0].then(|| zip_map(g, ins[1], |g, b| g / b)),
                    needs[1].then(|| {
                        let gb = zip_map(g, out, |g, y| g * y);
                        zip_map(&gb, ins[1], |v, b| -v / b)
                    }),
                ]
            }),
        )
    }

    /// Adds `other`, whose shape is a trailing suffix of `self`'s shape,
    /// broadcast over the leading axes.
    pub fn add_broadcast(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        let (xs, ys) = (self.shape(), other.shape());
        if ys.len() > xs.len() || xs[xs.len() - ys.len()..] != ys[..] {
            return Err(Error::shape(
                "add_broadcast",
                format!("{:?} is not a suffix of {:?}", ys, xs),
            ));
        }
        let x = self.value();
        let yv = other.value();
        let block = yv.numel().max(1);
        let mut out = x.data().to_vec();
        for chunk in out.chunks_mut(block) {
            for (o, &b) in chunk.iter_mut().zip(yv.data()) {
                *o = *o + b;
            }
        }
        self.tape().record(
            "add_broadcast",
            &[self, other],
            Tensor::from_parts(xs, out),
            Box::new(move |g, ins, _, needs| {
                let gy = needs[1].then(|| {
                    let mut acc = vec![T::zero(); block];
                    for chunk in g.data().chunks(block) {
                        for (a, &v) in acc.iter_mut().zip(chunk) {
                            *a = *a + v;
                        }
                    }
                    Tensor::from_parts(ins[1].shape().to_vec(), acc)
                });
                vec![needs[0].then(|| g.clone()), gy]
            }),
        )
    }

    pub fn scale(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::from_f64(c);
        self.unary("scale", move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::from_f64(c);
        self.unary("add_scalar", move |x| x + c, |_, _| T::one())
    }

    pub fn neg(self) -> Result<Var<'t, T>> {
        self.unary("neg", |x| -x, |_, _| -T::one())
    }

    pub fn exp(self) -> Result<Var<'t, T>> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    pub fn ln(self) -> Result<Var<'t, T>> {
        self.unary("ln", |x| x.ln(), |x, _| T::one() / x)
    }

    pub fn square(self) -> Result<Var<'t, T>> {
        let two = T::from_f64(2.0);
        self.unary("square", |x| x * x, move |x, _| two * x)
    }

    pub fn sqrt(self) -> Result<Var<'t, T>> {
        let half = T::from_f64(0.5);
        self.unary("sqrt", |x| x.sqrt(), move |_, y| half / y)
    }

    /// `x^p` for a constant exponent. A zero exponent has zero derivative.
    pub fn powf(self, p: f64) -> Result<Var<'t, T>> {
        let pt = T::from_f64(p);
        let pm1 = T::from_f64(p - 1.0);
        self.unary(
            "powf",
            move |x| x.powf(pt),
            move |x, _| {
                if pt == T::zero() {
                    T::zero()
                } else {
                    pt * x.powf(pm1)
                }
            },
        )
    }

    /// `max(x, c)`; the gradient passes where `x > c`.
    pub fn clamp_min(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::from_f64(c);
        self.unary(
            "clamp_min",
            move |x| if x > c { x } else { c },
            move |x, _| if x > c { T::one() } else { T::zero() },
        )
    }

    pub fn relu(self) -> Result<Var<'t, T>> {
        self.unary(
            "relu",
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    /// GELU, tanh approximation.
    pub fn gelu(self) -> Result<Var<'t, T>> {
        self.unary("gelu", gelu_fwd, gelu_grad)
    }

    pub fn sum_all(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let s: T = x.data().iter().copied().sum();
        self.tape().record(
            "sum_all",
            &[self],
            Tensor::scalar(s),
            Box::new(|g, ins, _, _| vec![Some(Tensor::full(ins[0].shape().to_vec(), g.item()))]),
        )
    }

    pub fn mean_all(self) -> Result<Var<'t, T>> {
        let n = self.value().numel();
        if n == 0 {
            return Err(Error::shape("mean_all", "empty tensor"));
        }
        self.sum_all()?.scale(1.0 / n as f64)
    }

    /// Sums the last axis away: `[.., D] -> [..]`.
    pub fn sum_last(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let Some((&d, lead)) = shape.split_last() else {
            return Err(Error::shape("sum_last", "scalar input"));
        };
        let d = d.max(1);
        let out: Vec<T> = x.data().chunks(d).map(|c| c.iter().copied().sum()).collect();
        let last = shape[shape.len() - 1];
        self.tape().record(
            "sum_last",
            &[self],
            Tensor::from_parts(lead.to_vec(), out),
            Box::new(move |g, ins, _, _| {
                let mut data = Vec::with_capacity(ins[0].numel());
                for &v in g.data() {
                    data.extend(std::iter::repeat(v).take(last));
                }
                vec![Some(Tensor::from_parts(ins[0].shape().to_vec(), data))]
            }),
        )
    }

    pub fn mean_last(self) -> Result<Var<'t, T>> {
        let d = *self
            .shape()
            .last()
            .ok_or_else(|| Error::shape("mean_last", "scalar input"))?;
        self.sum_last()?.scale(1.0 / d as f64)
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

fn gelu_fwd<T: Element>(x: T) -> T {
    let k = T::from_f64(GELU_K);
    let c = T::from_f64(GELU_C);
    let half = T::from_f64(0.5);
    half * x * (T::one() + (k * (x + c * x * x * x)).tanh())
}

fn gelu_grad<T: Element>(x: T, _y: T) -> T {
    let k = T::from_f64(GELU_K);
    let c = T::from_f64(GELU_C);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let t = (k * (x + c * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + three * c * x * x)
}
