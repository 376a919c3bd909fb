use super::{FunetConfig, FusionBlock};
use crate::nnkit::{Conv2d, Element, GroupNorm, Module, Parameter, Rng, Tape, Var};
use crate::{impl_module, Error, Result};

/// `(conv3×3 → GroupNorm → ReLU) × 2`.
#[derive(Clone, Debug)]
pub struct DoubleConv<T: Element = f32> {
    pub conv1: Conv2d<T>,
    pub norm1: GroupNorm<T>,
    pub conv2: Conv2d<T>,
    pub norm2: GroupNorm<T>,
}
impl_module!(DoubleConv { conv1, norm1, conv2, norm2 });

impl<T: Element> DoubleConv<T> {
    pub fn new(name: &str, input: usize, output: usize, groups: usize, rng: &mut Rng) -> Result<Self> {
        Ok(DoubleConv {
            conv1: Conv2d::new(&format!("{name}.conv1"), input, output, 3, 1, 1, rng),
            norm1: GroupNorm::new(&format!("{name}.norm1"), groups.min(output), output, rng)?,
            conv2: Conv2d::new(&format!("{name}.conv2"), output, output, 3, 1, 1, rng),
            norm2: GroupNorm::new(&format!("{name}.norm2"), groups.min(output), output, rng)?,
        })
    }

    pub fn forward<'t>(&self, tape: &'t Tape<T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let x = self.norm1.forward(tape, self.conv1.forward(tape, x)?)?.relu()?;
        self.norm2.forward(tape, self.conv2.forward(tape, x)?)?.relu()
    }
}

/// A segmentation network driven by frozen MAE token grids.
pub trait Segmenter<T: Element>: Module<T> {
    /// Encoder layers (1-based) whose grids `forward` expects, in order.
    fn grid_layers(&self) -> Vec<usize>;
    fn num_classes(&self) -> usize;
    /// `images: [N, 1, S, S]` → logits `[N, C, S, S]`.
    fn forward<'t>(&self, tape: &'t Tape<T>, images: Var<'t, T>, grids: &[Var<'t, T>]) -> Result<Var<'t, T>>;
}

/// U-Net with MAE fusion at the bottleneck and after every decoder stage.
#[derive(Clone, Debug)]
pub struct FunetModel<T: Element = f32> {
    pub config: FunetConfig,
    pub down: Vec<DoubleConv<T>>,
    pub bottleneck: DoubleConv<T>,
    pub up: Vec<DoubleConv<T>>,
    /// Index 0 is the bottleneck, then decoder stages coarse to fine.
    pub fusions: Vec<FusionBlock<T>>,
    pub head: Conv2d<T>,
}

impl<T: Element> Module<T> for FunetModel<T> {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Parameter<T>)) {
        self.down.visit(f);
        self.bottleneck.visit(f);
        self.up.visit(f);
        self.fusions.visit(f);
        self.head.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter<T>)) {
        self.down.visit_mut(f);
        self.bottleneck.visit_mut(f);
        self.up.visit_mut(f);
        self.fusions.visit_mut(f);
        self.head.visit_mut(f);
    }
}

impl<T: Element> FunetModel<T> {
    pub fn new(config: FunetConfig, enc_layers: usize, enc_dim: usize, grid: usize, rng: &mut Rng) -> Result<Self> {
        config.validate(enc_layers, grid)?;
        let c = &config;
        let g = c.norm_groups;
        let mut down = Vec::with_capacity(c.depth);
        for i in 0..c.depth {
            let input = if i == 0 { 1 } else { c.width(i - 1) };
            down.push(DoubleConv::new(&format!("funet.down.{i}"), input, c.width(i), g, rng)?);
        }
        let bottleneck = DoubleConv::new("funet.bottleneck", c.width(c.depth - 1), c.width(c.depth), g, rng)?;
        let mut up = Vec::with_capacity(c.depth);
        for j in 1..=c.depth {
            let level = c.depth - j;
            up.push(DoubleConv::new(
                &format!("funet.up.{}", j - 1),
                c.width(level + 1) + c.width(level),
                c.width(level),
                g,
                rng,
            )?);
        }
        let mut fusions = Vec::with_capacity(c.depth + 1);
        for k in 0..=c.depth {
            fusions.push(FusionBlock::new(
                &format!("funet.fusion.{k}"),
                c.fusion_strategy,
                enc_dim,
                c.width(c.depth - k),
                rng,
            )?);
        }
        let head = Conv2d::new("funet.head", c.base_width, c.num_classes, 1, 1, 0, rng);
        Ok(FunetModel {
            config,
            down,
            bottleneck,
            up,
            fusions,
            head,
        })
    }

    /// Feature maps after each fusion point (bottleneck first) and the
    /// logits.
    pub fn forward_stages<'t>(
        &self,
        tape: &'t Tape<T>,
        images: Var<'t, T>,
        grids: &[Var<'t, T>],
    ) -> Result<(Vec<Var<'t, T>>, Var<'t, T>)> {
        let c = &self.config;
        let s = images.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != c.image_size || s[3] != c.image_size {
            return Err(Error::shape(
                "funet_forward",
                format!("expected [N, 1, {0}, {0}] images, got {s:?}", c.image_size),
            ));
        }
        if grids.len() != c.depth + 1 {
            return Err(Error::Contract(format!("{} token grids for {} fusion points", grids.len(), c.depth + 1)));
        }
        let mut skips = Vec::with_capacity(c.depth);
        let mut x = images;
        for stage in &self.down {
            let f = stage.forward(tape, x)?;
            skips.push(f);
            x = f.max_pool2x2()?;
        }
        x = self.bottleneck.forward(tape, x)?;
        x = self.fusions[0].forward(tape, x, grids[0])?;
        let mut stages = vec![x];
        for (j, stage) in self.up.iter().enumerate() {
            let skip = skips[c.depth - 1 - j];
            let upsampled = x.upsample_bilinear2x()?;
            x = stage.forward(tape, Var::concat(&[upsampled, skip], 1)?)?;
            x = self.fusions[j + 1].forward(tape, x, grids[j + 1])?;
            stages.push(x);
        }
        Ok((stages, self.head.forward(tape, x)?))
    }
}

impl<T: Element> Segmenter<T> for FunetModel<T> {
    fn grid_layers(&self) -> Vec<usize> {
        (0..=self.config.depth).map(|k| self.config.layer_for_point(k)).collect()
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn forward<'t>(&self, tape: &'t Tape<T>, images: Var<'t, T>, grids: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        Ok(self.forward_stages(tape, images, grids)?.1)
    }
}

/// Baseline that segments from the last encoder layer alone: three 3×3
/// convs with 2× bilinear upsampling between them, then a bilinear resize to
/// the image size.
#[derive(Clone, Debug)]
pub struct MaeDirectHead<T: Element = f32> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub layer: usize,
    pub image_size: usize,
}
impl_module!(MaeDirectHead { conv1, conv2, conv3 });

impl<T: Element> MaeDirectHead<T> {
    pub fn new(enc_layers: usize, enc_dim: usize, width: usize, num_classes: usize, image_size: usize, rng: &mut Rng) -> Result<Self> {
        if num_classes < 2 || width == 0 {
            return Err(Error::Config("MAE-direct head needs >= 2 classes and width >= 1".into()));
        }
        Ok(MaeDirectHead {
            conv1: Conv2d::new("direct.conv1", enc_dim, 2 * width, 3, 1, 1, rng),
            conv2: Conv2d::new("direct.conv2", 2 * width, width, 3, 1, 1, rng),
            conv3: Conv2d::new("direct.conv3", width, num_classes, 3, 1, 1, rng),
            layer: enc_layers,
            image_size,
        })
    }
}

impl<T: Element> Segmenter<T> for MaeDirectHead<T> {
    fn grid_layers(&self) -> Vec<usize> {
        vec![self.layer]
    }

    fn num_classes(&self) -> usize {
        self.conv3.out_channels()
    }

    fn forward<'t>(&self, tape: &'t Tape<T>, images: Var<'t, T>, grids: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let n = images.shape()[0];
        let [grid] = grids else {
            return Err(Error::Contract(format!("MAE-direct expects 1 token grid, got {}", grids.len())));
        };
        if grid.shape()[0] != n {
            return Err(Error::shape("mae_direct_forward", "grid batch differs from image batch"));
        }
        let x = self.conv1.forward(tape, *grid)?.relu()?.upsample_bilinear2x()?;
        let x = self.conv2.forward(tape, x)?.relu()?.upsample_bilinear2x()?;
        let x = self.conv3.forward(tape, x)?;
        let s = self.image_size;
        if x.shape()[2] == s && x.shape()[3] == s {
            Ok(x)
        } else {
            x.resize_bilinear(s, s)
        }
    }
}
