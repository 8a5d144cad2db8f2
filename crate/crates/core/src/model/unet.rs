use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::MhsaShape;
use super::block::GtBlock;
use super::config::GtUNetConfig;
use super::layers::{BatchNorm, Conv, ConvBnRelu, Ctx, Mode};
use crate::tensor::{Graph, ParamSet, Tensor, Var};
use crate::{Error, Result};

/// U-shaped network whose encoder and decoder stages are group Transformer
/// blocks.
///
/// * stem: 3×3 conv `input_channels → c₀`
/// * encoder level `i`: block(cᵢ), kept as skip, 2×2 max pool, 3×3 conv `cᵢ → cᵢ₊₁`
/// * bottom: block(c_{L-1})
/// * decoder level `i`: nearest ×2, concat skip, 3×3 conv `cᵢ + cᵢ₊₁ → cᵢ`,
///   block(cᵢ)
/// * head: 1×1 conv `c₀ → output_channels`, sigmoid
///
/// Every non-head convolution is followed by batch norm and ReLU.
#[derive(Clone, Debug)]
pub struct GtUNet {
    config: GtUNetConfig,
    params: ParamSet,
    stem: ConvBnRelu,
    encoders: Vec<GtBlock>,
    downs: Vec<ConvBnRelu>,
    bottom: GtBlock,
    fuses: Vec<ConvBnRelu>,
    decoders: Vec<GtBlock>,
    head: Conv,
}

impl GtUNet {
    /// Builds the network with deterministic initialization from `seed`.
    pub fn new(config: GtUNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let ch = config.channels_per_level.clone();
        let last = config.levels - 1;
        let shape = MhsaShape {
            heads: config.heads,
            group_h: config.group_h,
            group_w: config.group_w,
        };

        let stem = ConvBnRelu::new(&mut params, "stem", config.input_channels, ch[0], 3, &mut rng);
        let mut encoders = Vec::new();
        let mut downs = Vec::new();
        for i in 0..last {
            encoders.push(GtBlock::new(&mut params, &format!("enc{i}"), ch[i], config.phi, shape, &mut rng)?);
            downs.push(ConvBnRelu::new(&mut params, &format!("down{i}"), ch[i], ch[i + 1], 3, &mut rng));
        }
        let bottom = GtBlock::new(&mut params, "bottom", ch[last], config.phi, shape, &mut rng)?;
        let mut fuses = Vec::new();
        let mut decoders = Vec::new();
        for i in (0..last).rev() {
            fuses.push(ConvBnRelu::new(&mut params, &format!("fuse{i}"), ch[i] + ch[i + 1], ch[i], 3, &mut rng));
            decoders.push(GtBlock::new(&mut params, &format!("dec{i}"), ch[i], config.phi, shape, &mut rng)?);
        }
        let head = Conv::new(&mut params, "head", ch[0], config.output_channels, 1, true, &mut rng);
        Ok(GtUNet {
            config,
            params,
            stem,
            encoders,
            downs,
            bottom,
            fuses,
            decoders,
            head,
        })
    }

    pub fn config(&self) -> &GtUNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn head(&self) -> &Conv {
        &self.head
    }

    /// All group Transformer blocks, encoder first.
    pub fn blocks(&self) -> impl Iterator<Item = &GtBlock> {
        self.encoders.iter().chain(std::iter::once(&self.bottom)).chain(&self.decoders)
    }

    /// Records the forward pass of `images` (`N×C×H×W`) and returns the
    /// per-pixel probability map `N×output_channels×H×W`.
    pub fn forward(&self, ctx: &mut Ctx<'_>, images: Var) -> Result<Var> {
        let shape = ctx.graph.shape(images).to_vec();
        let [_, c, h, w] = shape[..] else {
            return Err(Error::invalid("gt_unet", format!("expected N×C×H×W input, got {shape:?}")));
        };
        if c != self.config.input_channels {
            return Err(Error::invalid(
                "gt_unet",
                format!("model expects {} input channels, got {c}", self.config.input_channels),
            ));
        }
        self.config.check_input(h, w)?;

        let mut x = self.stem.forward(ctx, images)?;
        let mut skips = Vec::with_capacity(self.encoders.len());
        for (block, down) in self.encoders.iter().zip(&self.downs) {
            x = block.forward(ctx, x)?;
            skips.push(x);
            let pooled = ctx.graph.max_pool2(x)?;
            x = down.forward(ctx, pooled)?;
        }
        x = self.bottom.forward(ctx, x)?;
        for (fuse, block) in self.fuses.iter().zip(&self.decoders) {
            let skip = skips.pop().expect("one skip per decoder level");
            let upsampled = ctx.graph.upsample2(x)?;
            let cat = ctx.graph.concat_channels(&[skip, upsampled])?;
            let y = fuse.forward(ctx, cat)?;
            x = block.forward(ctx, y)?;
        }
        let logits = self.head.forward(ctx, x)?;
        Ok(ctx.graph.sigmoid(logits))
    }

    /// Folds batch statistics gathered in training mode into the running
    /// estimates.
    pub fn apply_bn_updates(&mut self, updates: &[(BatchNorm, crate::tensor::BatchStats)]) {
        for (bn, stats) in updates {
            bn.update_running(&mut self.params, stats);
        }
    }

    /// Inference with running statistics.
    pub fn predict(&self, images: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(images.clone());
        let mut ctx = Ctx::new(&mut g, &self.params, Mode::Eval);
        let out = self.forward(&mut ctx, x)?;
        Ok(g.value(out).clone())
    }
}
