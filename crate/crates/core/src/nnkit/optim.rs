use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Element, Gradients, Module, Tensor};
use crate::{Error, Result};

/// AdamW hyper-parameters. Defaults: lr 1e-4, betas (0.9, 0.999), eps 1e-8,
/// weight decay 0.01.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment buffers of one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T: Element = f32> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

/// AdamW with bias correction and decoupled weight decay:
///
/// ```text
/// p ← p·(1 − lr·wd)
/// m ← β1·m + (1 − β1)·g
/// v ← β2·v + (1 − β2)·g²
/// p ← p − lr/(1 − β1ᵗ) · m / (√v / √(1 − β2ᵗ) + eps)
/// ```
///
/// Frozen parameters are skipped and get no moment buffers.
#[derive(Clone, Debug)]
pub struct AdamW<T: Element = f32> {
    pub config: AdamWConfig,
    step: u64,
    moments: BTreeMap<String, Moments<T>>,
}

impl<T: Element> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        AdamW {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> &BTreeMap<String, Moments<T>> {
        &self.moments
    }

    /// Rebuilds the optimizer from saved state.
    pub fn restore(config: AdamWConfig, step: u64, moments: BTreeMap<String, Moments<T>>) -> Self {
        AdamW {
            config,
            step,
            moments,
        }
    }

    /// Applies one update to every trainable parameter of `model`.
    ///
    /// All gradients are validated before anything is written, so a missing or
    /// non-finite gradient leaves the model and the optimizer untouched.
    pub fn step<M: Module<T> + ?Sized>(&mut self, model: &mut M, grads: &Gradients<T>) -> Result<()> {
        self.step_with(model, |name| grads.param(name))
    }

    pub fn step_with<'g, M: Module<T> + ?Sized>(
        &mut self,
        model: &mut M,
        grad_of: impl Fn(&str) -> Option<&'g Tensor<T>>,
    ) -> Result<()> {
        let mut problem = None;
        model.visit(&mut |p| {
            if p.frozen || problem.is_some() {
                return;
            }
            match grad_of(&p.name) {
                None => problem = Some(Error::MissingGradient(p.name.clone())),
                Some(g) if g.shape() != p.tensor.shape() => {
                    problem = Some(Error::shape(
                        "adamw_step",
                        format!("gradient {:?} for parameter `{}` {:?}", g.shape(), p.name, p.tensor.shape()),
                    ))
                }
                Some(g) if !g.is_finite() => {
                    problem = Some(Error::NonFinite {
                        op: format!("gradient of `{}`", p.name),
                    })
                }
                Some(_) => {}
            }
        });
        if let Some(e) = problem {
            return Err(e);
        }

        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let decay = T::from_f64(1.0 - c.lr * c.weight_decay);
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let one_m_b1 = T::from_f64(1.0 - c.beta1);
        let one_m_b2 = T::from_f64(1.0 - c.beta2);
        let step_size = T::from_f64(c.lr / (1.0 - c.beta1.powi(t)));
        let bc2_sqrt = T::from_f64((1.0 - c.beta2.powi(t)).sqrt());
        let eps = T::from_f64(c.eps);
        let moments = &mut self.moments;
        model.visit_mut(&mut |p| {
            if p.frozen {
                return;
            }
            let g = grad_of(&p.name).expect("validated above");
            let n = p.tensor.numel();
            let st = moments.entry(p.name.clone()).or_insert_with(|| Moments {
                m: vec![T::zero(); n],
                v: vec![T::zero(); n],
            });
            for (((w, &gi), m), v) in p
                .tensor
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(st.m.iter_mut())
                .zip(st.v.iter_mut())
            {
                *w = *w * decay;
                *m = b1 * *m + one_m_b1 * gi;
                *v = b2 * *v + one_m_b2 * gi * gi;
                let denom = v.sqrt() / bc2_sqrt + eps;
                *w = *w - step_size * *m / denom;
            }
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnkit::Parameter;

    fn one_param(value: f64) -> Parameter<f64> {
        Parameter::new("p", Tensor::new(vec![1], vec![value]).unwrap())
    }

    fn step(p: &mut Parameter<f64>, g: f64, cfg: AdamWConfig) -> AdamW<f64> {
        let mut opt = AdamW::new(cfg);
        let grad = Tensor::new(vec![1], vec![g]).unwrap();
        opt.step_with(p, |_| Some(&grad)).unwrap();
        opt
    }

    #[test]
    fn zero_grad_no_decay_is_noop() {
        let mut p = one_param(1.5);
        step(&mut p, 0.0, AdamWConfig { weight_decay: 0.0, ..Default::default() });
        assert_eq!(p.tensor.data()[0], 1.5);
    }

    #[test]
    fn decoupled_decay_one_step() {
        let mut p = one_param(1.0);
        step(&mut p, 0.0, AdamWConfig { lr: 0.1, weight_decay: 0.01, ..Default::default() });
        assert!((p.tensor.data()[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        for g in [3.0, -0.25, 1e-3] {
            let lr = 0.05;
            let mut p = one_param(0.0);
            let cfg = AdamWConfig { lr, weight_decay: 0.0, ..Default::default() };
            step(&mut p, g, cfg.clone());
            let expect = -lr * g.signum();
            let tol = lr * cfg.eps / g.abs();
            assert!((p.tensor.data()[0] - expect).abs() <= tol + 1e-15, "g={g}");
        }
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut p = one_param(2.0);
        let mut opt = AdamW::<f64>::new(AdamWConfig::default());
        let grad = Tensor::new(vec![1], vec![f64::NAN]).unwrap();
        assert!(matches!(opt.step_with(&mut p, |_| Some(&grad)), Err(Error::NonFinite { .. })));
        assert_eq!(p.tensor.data()[0], 2.0);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn frozen_parameter_untouched() {
        let mut p = one_param(2.0);
        p.frozen = true;
        let mut opt = AdamW::<f64>::new(AdamWConfig::default());
        opt.step_with(&mut p, |_| None).unwrap();
        assert_eq!(p.tensor.data()[0].to_bits(), 2.0f64.to_bits());
        assert!(opt.moments().is_empty());
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = one_param(2.0);
        let mut opt = AdamW::<f64>::new(AdamWConfig::default());
        assert!(matches!(opt.step_with(&mut p, |_| None), Err(Error::MissingGradient(_))));
    }
}
