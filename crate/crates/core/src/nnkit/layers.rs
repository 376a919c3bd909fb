//! Parameterised building blocks.

use super::{Element, Init, Parameter, Rng, Tape, Var};
use crate::{impl_module, Error, Result};

fn param<T: Element>(prefix: &str, leaf: &str, shape: Vec<usize>, init: Init, rng: &mut Rng) -> Parameter<T> {
    Parameter::new(format!("{prefix}.{leaf}"), init.tensor(shape, rng))
}

/// Affine map `y = x·Wᵀ + b` with `W: [out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<T: Element = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
}
impl_module!(Linear { weight, bias });

impl<T: Element> Linear<T> {
    pub fn new(name: &str, input: usize, output: usize, init: Init, rng: &mut Rng) -> Self {
        Linear {
            weight: param(name, "weight", vec![output, input], init, rng),
            bias: param(name, "bias", vec![output], Init::Zeros, rng),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.tensor.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.tensor.shape()[0]
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.linear(tape.param(&self.weight), Some(tape.param(&self.bias)))
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm<T: Element = f32> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub eps: f64,
}
impl_module!(LayerNorm { gamma, beta });

impl<T: Element> LayerNorm<T> {
    pub fn new(name: &str, dim: usize, rng: &mut Rng) -> Self {
        LayerNorm {
            gamma: param(name, "weight", vec![dim], Init::Ones, rng),
            beta: param(name, "bias", vec![dim], Init::Zeros, rng),
            eps: 1e-6,
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.layer_norm(tape.param(&self.gamma), tape.param(&self.beta), self.eps)
    }
}

#[derive(Clone, Debug)]
pub struct GroupNorm<T: Element = f32> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub groups: usize,
    pub eps: f64,
}
impl_module!(GroupNorm { gamma, beta });

impl<T: Element> GroupNorm<T> {
    pub fn new(name: &str, groups: usize, channels: usize, rng: &mut Rng) -> Result<Self> {
        if groups == 0 || channels % groups != 0 {
            return Err(Error::Config(format!(
                "{name}: {channels} channels cannot form {groups} groups"
            )));
        }
        Ok(GroupNorm {
            gamma: param(name, "weight", vec![channels], Init::Ones, rng),
            beta: param(name, "bias", vec![channels], Init::Zeros, rng),
            groups,
            eps: 1e-5,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.group_norm(self.groups, tape.param(&self.gamma), tape.param(&self.beta), self.eps)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d<T: Element = f32> {
    pub weight: Parameter<T>,
    pub bias: Parameter<T>,
    pub stride: usize,
    pub pad: usize,
}
impl_module!(Conv2d { weight, bias });

impl<T: Element> Conv2d<T> {
    /// `kernel × kernel` convolution, Kaiming-uniform weights, zero bias.
    pub fn new(
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = input * kernel * kernel;
        Conv2d {
            weight: param(
                name,
                "weight",
                vec![output, input, kernel, kernel],
                Init::KaimingUniform { fan_in },
                rng,
            ),
            bias: param(name, "bias", vec![output], Init::Zeros, rng),
            stride,
            pad,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.tensor.shape()[0]
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(
            tape.param(&self.weight),
            Some(tape.param(&self.bias)),
            self.stride,
            self.pad,
        )
    }
}

/// Scaled dot-product attention with `heads` heads.
///
/// Queries and keys/values may come from token sets of different widths; all
/// four projections map into (or out of) `dim`, which must divide by `heads`.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention<T: Element = f32> {
    pub q: Linear<T>,
    pub k: Linear<T>,
    pub v: Linear<T>,
    pub out: Linear<T>,
    pub heads: usize,
}
impl_module!(MultiHeadAttention { q, k, v, out });

impl<T: Element> MultiHeadAttention<T> {
    /// Self-attention over `dim`-wide tokens.
    pub fn new(name: &str, dim: usize, heads: usize, rng: &mut Rng) -> Result<Self> {
        Self::cross(name, dim, dim, dim, dim, heads, rng)
    }

    /// Cross-attention from `q_dim` queries onto `kv_dim` keys/values through an
    /// inner width `dim`, projected back to `out_dim`.
    pub fn cross(
        name: &str,
        q_dim: usize,
        kv_dim: usize,
        dim: usize,
        out_dim: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!(
                "{name}: attention width {dim} is not divisible by {heads} heads"
            )));
        }
        let init = Init::TruncNormal(0.02);
        Ok(MultiHeadAttention {
            q: Linear::new(&format!("{name}.q"), q_dim, dim, init, rng),
            k: Linear::new(&format!("{name}.k"), kv_dim, dim, init, rng),
            v: Linear::new(&format!("{name}.v"), kv_dim, dim, init, rng),
            out: Linear::new(&format!("{name}.out"), dim, out_dim, init, rng),
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.q.out_features()
    }

    /// `q: [N, Tq, Dq]`, `kv: [N, Tkv, Dkv]` → `[N, Tq, out_dim]`.
    pub fn forward<'t>(&self, tape: &'t Tape<T>, q: Var<'t, T>, kv: Var<'t, T>) -> Result<Var<'t, T>> {
        let (qs, ks) = (q.shape(), kv.shape());
        if qs.len() != 3 || ks.len() != 3 || qs[0] != ks[0] {
            return Err(Error::shape(
                "multi_head_attention",
                format!("queries {:?}, keys/values {:?}", qs, ks),
            ));
        }
        let (n, tq, tk) = (qs[0], qs[1], ks[1]);
        let (d, h) = (self.dim(), self.heads);
        let dh = d / h;
        let split = |x: Var<'t, T>, t: usize| -> Result<Var<'t, T>> {
            if h == 1 {
                return Ok(x);
            }
            x.reshape(vec![n, t, h, dh])?
                .permute(&[0, 2, 1, 3])?
                .reshape(vec![n * h, t, dh])
        };
        let qh = split(self.q.forward(tape, q)?, tq)?;
        let kh = split(self.k.forward(tape, kv)?, tk)?;
        let vh = split(self.v.forward(tape, kv)?, tk)?;
        let attn = qh
            .bmm(kh, true)?
            .scale(1.0 / (dh as f64).sqrt())?
            .softmax(2)?;
        let ctx = attn.bmm(vh, false)?;
        let ctx = if h == 1 {
            ctx
        } else {
            ctx.reshape(vec![n, h, tq, dh])?
                .permute(&[0, 2, 1, 3])?
                .reshape(vec![n, tq, d])?
        };
        self.out.forward(tape, ctx)
    }
}

/// Two-layer GELU feed-forward network.
#[derive(Clone, Debug)]
pub struct Mlp<T: Element = f32> {
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
}
impl_module!(Mlp { fc1, fc2 });

impl<T: Element> Mlp<T> {
    pub fn new(name: &str, dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let init = Init::TruncNormal(0.02);
        Mlp {
            fc1: Linear::new(&format!("{name}.fc1"), dim, hidden, init, rng),
            fc2: Linear::new(&format!("{name}.fc2"), hidden, dim, init, rng),
        }
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.fc1.forward(tape, x)?.gelu()?;
        self.fc2.forward(tape, h)
    }
}

/// Pre-norm transformer block: `x + MHA(LN(x))`, then `x + MLP(LN(x))`.
#[derive(Clone, Debug)]
pub struct TransformerBlock<T: Element = f32> {
    pub norm1: LayerNorm<T>,
    pub attn: MultiHeadAttention<T>,
    pub norm2: LayerNorm<T>,
    pub mlp: Mlp<T>,
}
impl_module!(TransformerBlock { norm1, attn, norm2, mlp });

impl<T: Element> TransformerBlock<T> {
    pub fn new(name: &str, dim: usize, heads: usize, mlp_ratio: f64, rng: &mut Rng) -> Result<Self> {
        let hidden = ((dim as f64) * mlp_ratio).round() as usize;
        Ok(TransformerBlock {
            norm1: LayerNorm::new(&format!("{name}.norm1"), dim, rng),
            attn: MultiHeadAttention::new(&format!("{name}.attn"), dim, heads, rng)?,
            norm2: LayerNorm::new(&format!("{name}.norm2"), dim, rng),
            mlp: Mlp::new(&format!("{name}.mlp"), dim, hidden.max(1), rng),
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let h = self.norm1.forward(tape, x)?;
        let x = x.add(self.attn.forward(tape, h, h)?)?;
        let h = self.norm2.forward(tape, x)?;
        x.add(self.mlp.forward(tape, h)?)
    }
}
