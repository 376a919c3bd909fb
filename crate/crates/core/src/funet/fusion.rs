use super::FusionStrategy;
use crate::nnkit::{Conv2d, Element, MultiHeadAttention, Rng, Tape, Var};
use crate::{impl_module, Error, Result};

/// Merges a projected MAE token grid into a CNN feature map of `C_f`
/// channels. The output keeps the CNN map's shape.
#[derive(Clone, Debug)]
pub struct FusionBlock<T: Element = f32> {
    pub strategy: FusionStrategy,
    /// 1×1 projection `D_e -> C_f` (concat, add).
    pub proj: Option<Conv2d<T>>,
    /// 3×3 conv `2·C_f -> C_f` after concatenation.
    pub post: Option<Conv2d<T>>,
    /// Single-head cross-attention, CNN pixels as queries.
    pub attn: Option<MultiHeadAttention<T>>,
}
impl_module!(FusionBlock { proj, post, attn });

impl<T: Element> FusionBlock<T> {
    pub fn new(name: &str, strategy: FusionStrategy, enc_dim: usize, channels: usize, rng: &mut Rng) -> Result<Self> {
        let proj = |rng: &mut Rng| Conv2d::new(&format!("{name}.proj"), enc_dim, channels, 1, 1, 0, rng);
        Ok(match strategy {
            FusionStrategy::Concat => {
                let p = proj(rng);
                FusionBlock {
                    strategy,
                    proj: Some(p),
                    post: Some(Conv2d::new(&format!("{name}.post"), 2 * channels, channels, 3, 1, 1, rng)),
                    attn: None,
                }
            }
            FusionStrategy::Add => FusionBlock {
                strategy,
                proj: Some(proj(rng)),
                post: None,
                attn: None,
            },
            FusionStrategy::Attention => FusionBlock {
                strategy,
                proj: None,
                post: None,
                attn: Some(MultiHeadAttention::cross(
                    &format!("{name}.attn"),
                    channels,
                    enc_dim,
                    channels,
                    channels,
                    1,
                    rng,
                )?),
            },
        })
    }

    fn projected<'t>(&self, tape: &'t Tape<T>, grid: Var<'t, T>, h: usize, w: usize) -> Result<Var<'t, T>> {
        let proj = self.proj.as_ref().expect("projection present for concat/add fusion");
        let g = proj.forward(tape, grid)?;
        let gs = g.shape();
        if gs[2] == h && gs[3] == w {
            Ok(g)
        } else {
            g.resize_bilinear(h, w)
        }
    }

    /// `cnn: [N, C_f, H, W]`, `grid: [N, D_e, g, g]` → `[N, C_f, H, W]`.
    pub fn forward<'t>(&self, tape: &'t Tape<T>, cnn: Var<'t, T>, grid: Var<'t, T>) -> Result<Var<'t, T>> {
        let cs = cnn.shape();
        let gs = grid.shape();
        if cs.len() != 4 || gs.len() != 4 || cs[0] != gs[0] {
            return Err(Error::shape("fuse", format!("cnn {cs:?}, grid {gs:?}")));
        }
        let (n, c, h, w) = (cs[0], cs[1], cs[2], cs[3]);
        let out = match self.strategy {
            FusionStrategy::Add => cnn.add(self.projected(tape, grid, h, w)?)?,
            FusionStrategy::Concat => {
                let merged = Var::concat(&[cnn, self.projected(tape, grid, h, w)?], 1)?;
                self.post.as_ref().expect("post conv present").forward(tape, merged)?
            }
            FusionStrategy::Attention => {
                let attn = self.attn.as_ref().expect("attention present");
                let q = cnn.permute(&[0, 2, 3, 1])?.reshape(vec![n, h * w, c])?;
                let kv = grid.permute(&[0, 2, 3, 1])?.reshape(vec![n, gs[2] * gs[3], gs[1]])?;
                let ctx = attn.forward(tape, q, kv)?;
                let ctx = ctx.reshape(vec![n, h, w, c])?.permute(&[0, 3, 1, 2])?;
                cnn.add(ctx)?
            }
        };
        if out.shape() != cs {
            return Err(Error::Contract(format!(
                "fusion changed the feature shape from {cs:?} to {:?}",
                out.shape()
            )));
        }
        Ok(out)
    }
}
