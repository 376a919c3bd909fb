use crate::nnkit::{Element, Init, Linear, Module, Parameter, Rng, Tape, Tensor, Var};
use crate::{Error, Result};

/// The seven MRI sequence categories.
pub const SEQUENCE_CLASSES: [&str; 7] = ["T1", "T2", "FLAIR", "PD", "T2*", "SWI", "DTI/DWI"];

/// Frozen per-feature standardisation `(x - mean) · inv_std`, fitted once on
/// training features (a batch norm without affine terms).
#[derive(Clone, Debug)]
pub struct FeatureNorm<T: Element = f32> {
    pub mean: Parameter<T>,
    pub inv_std: Parameter<T>,
}

impl<T: Element> FeatureNorm<T> {
    const EPS: f64 = 1e-6;

    pub fn fit(features: &Tensor<T>) -> Result<Self> {
        if features.ndim() != 2 || features.shape()[0] == 0 {
            return Err(Error::shape("feature_norm", format!("expected [N, D] features, got {:?}", features.shape())));
        }
        let (n, d) = (features.shape()[0], features.shape()[1]);
        let mut mean = vec![0.0; d];
        for row in features.data().chunks(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for row in features.data().chunks(d) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v.as_f64() - m).powi(2);
            }
        }
        let freeze = |name: &str, v: Vec<f64>| {
            let mut p = Parameter::new(name, Tensor::from_fn(vec![d], |j| T::from_f64(v[j])));
            p.frozen = true;
            p
        };
        Ok(FeatureNorm {
            mean: freeze("head.feature_mean", mean),
            inv_std: freeze(
                "head.feature_inv_std",
                var.iter().map(|s| 1.0 / (s / n as f64 + Self::EPS).sqrt()).collect(),
            ),
        })
    }

    pub fn apply<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let s = x.shape();
        let d = self.mean.numel();
        if s.len() != 2 || s[1] != d {
            return Err(Error::shape("feature_norm", format!("features {s:?} for {d} statistics")));
        }
        let tile = |p: &Parameter<T>| Tensor::from_fn(s.clone(), |i| p.tensor.data()[i % d]);
        x.sub(tape.constant(tile(&self.mean)))?.mul(tape.constant(tile(&self.inv_std)))
    }
}
crate::impl_module!(FeatureNorm { mean, inv_std });

/// `logits = W·x + b` with `W: [C, D]`; `C·D + C` trainable parameters. An
/// optional frozen [`FeatureNorm`] standardises `x` first.
#[derive(Clone, Debug)]
pub struct LinearHead<T: Element = f32> {
    pub norm: Option<FeatureNorm<T>>,
    pub linear: Linear<T>,
    pub class_names: Vec<String>,
}

impl<T: Element> Module<T> for LinearHead<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.norm.visit(f);
        self.linear.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.norm.visit_mut(f);
        self.linear.visit_mut(f);
    }
}

impl<T: Element> LinearHead<T> {
    pub fn new(dim: usize, class_names: Vec<String>, rng: &mut Rng) -> Result<Self> {
        if class_names.len() < 2 {
            return Err(Error::Config(format!(
                "a classifier needs at least 2 classes, got {}",
                class_names.len()
            )));
        }
        let c = class_names.len();
        Ok(LinearHead {
            norm: None,
            linear: Linear::new("head", dim, c, Init::TruncNormal(0.01), rng),
            class_names,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn dim(&self) -> usize {
        self.linear.in_features()
    }

    /// `[N, D] -> [N, C]`.
    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let x = match &self.norm {
            Some(n) => n.apply(tape, x)?,
            None => x,
        };
        self.linear.forward(tape, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_formula() {
        let names = |c: usize| (0..c).map(|i| i.to_string()).collect::<Vec<_>>();
        for (c, d) in [(2, 1), (3, 64), (7, 64), (8, 768)] {
            let h = LinearHead::<f32>::new(d, names(c), &mut Rng::new(0)).unwrap();
            assert_eq!(h.num_trainable(), c * d + c);
        }
        let mut h = LinearHead::<f32>::new(768, names(8), &mut Rng::new(0)).unwrap();
        assert_eq!(h.num_trainable(), 6152);
        h.norm = Some(FeatureNorm::fit(&Tensor::ones(vec![2, 768])).unwrap());
        assert_eq!(h.num_trainable(), 6152);
    }

    #[test]
    fn feature_norm_standardises_training_features() {
        let mut rng = Rng::new(1);
        let x = Tensor::<f64>::from_fn(vec![50, 3], |i| rng.normal() * (1 + i % 3) as f64 + 5.0);
        let norm = FeatureNorm::fit(&x).unwrap();
        let tape = Tape::new();
        let y = norm.apply(&tape, tape.constant(x)).unwrap().value();
        for j in 0..3 {
            let col: Vec<f64> = y.data().iter().skip(j).step_by(3).copied().collect();
            let m = col.iter().sum::<f64>() / 50.0;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / 50.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-4);
        }
    }
}
