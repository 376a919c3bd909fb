use super::{Element, Rng, Tensor};

/// Named trainable (or frozen) tensor owned by a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T: Element = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
    pub frozen: bool,
}

impl<T: Element> Parameter<T> {
    pub fn new(name: impl Into<String>, tensor: Tensor<T>) -> Self {
        Parameter {
            name: name.into(),
            tensor,
            frozen: false,
        }
    }

    pub fn numel(&self) -> usize {
        self.tensor.numel()
    }
}

/// Weight initialisation schemes.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    /// Normal truncated at ±2σ.
    TruncNormal(f64),
    /// `U(-b, b)` with `b = sqrt(6 / fan_in)` (He / Kaiming, ReLU gain).
    KaimingUniform { fan_in: usize },
}

impl Init {
    pub fn tensor<T: Element>(self, shape: Vec<usize>, rng: &mut Rng) -> Tensor<T> {
        match self {
            Init::Zeros => Tensor::zeros(shape),
            Init::Ones => Tensor::ones(shape),
            Init::TruncNormal(std) => Tensor::from_fn(shape, |_| T::from_f64(rng.truncated_normal(std))),
            Init::KaimingUniform { fan_in } => {
                let bound = (6.0 / fan_in.max(1) as f64).sqrt();
                Tensor::from_fn(shape, |_| T::from_f64(rng.uniform_range(-bound, bound)))
            }
        }
    }
}

/// Anything that owns parameters.
pub trait Module<T: Element> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>));

    fn parameters(&self) -> Vec<&Parameter<T>> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(p));
        out
    }

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.numel());
        n
    }

    fn num_trainable(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| {
            if !p.frozen {
                n += p.numel()
            }
        });
        n
    }

    fn freeze(&mut self) {
        self.visit_mut(&mut |p| p.frozen = true);
    }

    fn unfreeze(&mut self) {
        self.visit_mut(&mut |p| p.frozen = false);
    }

    fn is_frozen(&self) -> bool {
        let mut frozen = true;
        self.visit(&mut |p| frozen &= p.frozen);
        frozen
    }
}

impl<T: Element, M: Module<T>> Module<T> for Vec<M> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        for m in self {
            m.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        for m in self {
            m.visit_mut(f);
        }
    }
}

impl<T: Element> Module<T> for Parameter<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        f(self)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        f(self)
    }
}

/// Implements [`Module`] for a struct by visiting the listed fields in order.
#[macro_export]
macro_rules! impl_module {
    ($ty:ident { $($field:ident),* $(,)? }) => {
        impl<T: $crate::nnkit::Element> $crate::nnkit::Module<T> for $ty<T> {
            fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a $crate::nnkit::Parameter<T>)) {
                $( $crate::nnkit::Module::<T>::visit(&self.$field, f); )*
            }
            fn visit_mut(&mut self, f: &mut dyn FnMut(&mut $crate::nnkit::Parameter<T>)) {
                $( $crate::nnkit::Module::<T>::visit_mut(&mut self.$field, f); )*
            }
        }
    };
}

impl<T: Element, M: Module<T>> Module<T> for Option<M> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        if let Some(m) = self {
            m.visit(f);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        if let Some(m) = self {
            m.visit_mut(f);
        }
    }
}
