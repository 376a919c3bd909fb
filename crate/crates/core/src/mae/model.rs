use super::{MaeConfig, MaskPlan};
use crate::nnkit::{Element, Init, LayerNorm, Linear, Module, Parameter, Rng, Tape, Tensor, TransformerBlock, Var};
use crate::{impl_module, Error, Result};

/// Patch embedding, CLS token, learned positions and the transformer stack.
#[derive(Clone, Debug)]
pub struct MaeEncoder<T: Element = f32> {
    pub patch_embed: Linear<T>,
    /// `[1, D]`.
    pub cls_token: Parameter<T>,
    /// `[1 + T, D]`; row 0 belongs to the CLS token.
    pub pos_embed: Parameter<T>,
    pub blocks: Vec<TransformerBlock<T>>,
    pub norm: LayerNorm<T>,
}
impl_module!(MaeEncoder { patch_embed, cls_token, pos_embed, blocks, norm });

/// Lightweight decoder predicting the pixels of every patch.
#[derive(Clone, Debug)]
pub struct MaeDecoder<T: Element = f32> {
    pub embed: Linear<T>,
    /// `[D_d]`.
    pub mask_token: Parameter<T>,
    /// `[1 + T, D_d]`.
    pub pos_embed: Parameter<T>,
    pub blocks: Vec<TransformerBlock<T>>,
    pub norm: LayerNorm<T>,
    pub pred: Linear<T>,
}
impl_module!(MaeDecoder { embed, mask_token, pos_embed, blocks, norm, pred });

#[derive(Clone, Debug)]
pub struct MaeModel<T: Element = f32> {
    pub config: MaeConfig,
    pub encoder: MaeEncoder<T>,
    pub decoder: MaeDecoder<T>,
}

impl<T: Element> Module<T> for MaeModel<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.encoder.visit(f);
        self.decoder.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.encoder.visit_mut(f);
        self.decoder.visit_mut(f);
    }
}

/// Encoder activations for a batch: the output of every block (1-based
/// layer `l` is `layers[l-1]`, each `[N, 1+V, D]`) and the normalized final
/// output.
pub struct EncoderOutput<'t, T: Element> {
    pub layers: Vec<Var<'t, T>>,
    pub last: Var<'t, T>,
}

impl<T: Element> MaeModel<T> {
    pub fn new(config: MaeConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let c = &config;
        let t = c.num_patches();
        let init = Init::TruncNormal(0.02);
        let encoder = MaeEncoder {
            patch_embed: Linear::new("encoder.patch_embed", c.patch_dim(), c.enc_dim, init, rng),
            cls_token: Parameter::new("encoder.cls_token", init.tensor(vec![1, c.enc_dim], rng)),
            pos_embed: Parameter::new("encoder.pos_embed", init.tensor(vec![1 + t, c.enc_dim], rng)),
            blocks: (0..c.enc_layers)
                .map(|i| TransformerBlock::new(&format!("encoder.blocks.{i}"), c.enc_dim, c.enc_heads, c.mlp_ratio, rng))
                .collect::<Result<_>>()?,
            norm: LayerNorm::new("encoder.norm", c.enc_dim, rng),
        };
        let decoder = MaeDecoder {
            embed: Linear::new("decoder.embed", c.enc_dim, c.dec_dim, init, rng),
            mask_token: Parameter::new("decoder.mask_token", init.tensor(vec![c.dec_dim], rng)),
            pos_embed: Parameter::new("decoder.pos_embed", init.tensor(vec![1 + t, c.dec_dim], rng)),
            blocks: (0..c.dec_layers)
                .map(|i| TransformerBlock::new(&format!("decoder.blocks.{i}"), c.dec_dim, c.dec_heads, c.mlp_ratio, rng))
                .collect::<Result<_>>()?,
            norm: LayerNorm::new("decoder.norm", c.dec_dim, rng),
            pred: Linear::new("decoder.pred", c.dec_dim, c.patch_dim(), init, rng),
        };
        Ok(MaeModel { config, encoder, decoder })
    }

    /// Sets the pixel head to zero so every prediction is zero.
    pub fn zero_pixel_head(&mut self) {
        self.decoder.pred.weight.tensor.data_mut().fill(T::zero());
        self.decoder.pred.bias.tensor.data_mut().fill(T::zero());
    }

    fn check_plans(&self, patches: &Tensor<T>, plans: &[MaskPlan]) -> Result<(usize, usize)> {
        let t = self.config.num_patches();
        let s = patches.shape();
        if s.len() != 3 || s[1] != t || s[2] != self.config.patch_dim() {
            return Err(Error::Contract(format!(
                "expected patches [N, {t}, {}], got {s:?}",
                self.config.patch_dim()
            )));
        }
        if plans.len() != s[0] || plans.is_empty() {
            return Err(Error::Contract(format!("{} mask plans for a batch of {}", plans.len(), s[0])));
        }
        let v = plans[0].visible.len();
        for p in plans {
            p.validate(t)?;
            if p.visible.len() != v {
                return Err(Error::Contract("all mask plans in a batch must keep the same count".into()));
            }
        }
        Ok((s[0], v))
    }

    /// Runs the encoder on the visible patches of `patches: [N, T, p²]`.
    /// Masked patches are dropped before embedding.
    pub fn encode<'t>(&self, tape: &'t Tape<T>, patches: &Tensor<T>, plans: &[MaskPlan]) -> Result<EncoderOutput<'t, T>> {
        let (n, _) = self.check_plans(patches, plans)?;
        let t = self.config.num_patches();
        let enc = &self.encoder;
        let visible: Vec<Vec<usize>> = plans.iter().map(|p| p.visible.clone()).collect();

        let x = tape.constant(patches.clone()).gather_rows(&visible)?;
        let x = enc.patch_embed.forward(tape, x)?;
        let pos = tape.param(&enc.pos_embed);
        let patch_pos = pos.narrow(0, 1, t)?.repeat_leading(n)?.gather_rows(&visible)?;
        let x = x.add(patch_pos)?;
        let cls = tape.param(&enc.cls_token).add(pos.narrow(0, 0, 1)?)?.repeat_leading(n)?;
        let mut x = Var::concat(&[cls, x], 1)?;

        let mut layers = Vec::with_capacity(enc.blocks.len());
        for b in &enc.blocks {
            x = b.forward(tape, x)?;
            layers.push(x);
        }
        let last = enc.norm.forward(tape, x)?;
        Ok(EncoderOutput { layers, last })
    }

    /// Predicts all `T` patches, `[N, T, p²]`, from the normalized encoder
    /// output. Mask tokens are placed by token position.
    pub fn decode<'t>(&self, tape: &'t Tape<T>, last: Var<'t, T>, plans: &[MaskPlan]) -> Result<Var<'t, T>> {
        let t = self.config.num_patches();
        let dec = &self.decoder;
        let s = last.shape();
        let (n, v) = (s[0], s[1] - 1);
        if plans.len() != n || plans.iter().any(|p| p.visible.len() != v || p.num_tokens() != t) {
            return Err(Error::Contract("decoder input does not match the mask plans".into()));
        }
        let x = dec.embed.forward(tape, last)?;
        let cls = x.narrow(1, 0, 1)?;
        let mut tokens = x.narrow(1, 1, v)?;
        if v < t {
            let masks = tape.param(&dec.mask_token).repeat_leading(t - v)?.repeat_leading(n)?;
            tokens = Var::concat(&[tokens, masks], 1)?;
        }
        let restore: Vec<Vec<usize>> = plans.iter().map(|p| p.restore_index()).collect();
        let tokens = tokens.gather_rows(&restore)?;
        let pos = tape.param(&dec.pos_embed);
        let tokens = tokens.add_broadcast(pos.narrow(0, 1, t)?)?;
        let cls = cls.add_broadcast(pos.narrow(0, 0, 1)?)?;
        let mut x = Var::concat(&[cls, tokens], 1)?;
        for b in &dec.blocks {
            x = b.forward(tape, x)?;
        }
        let x = dec.norm.forward(tape, x)?;
        dec.pred.forward(tape, x)?.narrow(1, 1, t)
    }
}
