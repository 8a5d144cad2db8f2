use rand::Rng;

use super::attention::{mhsa, MhsaShape, MhsaVars};
use super::group::{merge_groups, partition_groups};
use super::layers::{kaiming, BatchNorm, Conv, Ctx};
use crate::tensor::{ParamId, ParamSet, Tensor, Var};
use crate::{Error, Result};

/// Group Transformer block:
///
/// `x → conv3×3 (C→C/φ) → BN → ReLU → partition → MHSA → merge →
///  conv3×3 (C/φ→C) → BN → + x`
///
/// Attention weights are shared by all groups of the block.
#[derive(Clone, Debug)]
pub struct GtBlock {
    pub channels: usize,
    pub bottleneck: usize,
    pub shape: MhsaShape,
    pub conv_in: Conv,
    pub bn_in: BatchNorm,
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub rel_h: ParamId,
    pub rel_w: ParamId,
    pub conv_out: Conv,
    pub bn_out: BatchNorm,
}

impl GtBlock {
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        channels: usize,
        phi: usize,
        shape: MhsaShape,
        rng: &mut R,
    ) -> Result<Self> {
        if phi == 0 || channels % phi != 0 || (channels / phi) % shape.heads != 0 {
            return Err(Error::Config(format!(
                "{name}: {channels} channels with phi={phi} and {} heads",
                shape.heads
            )));
        }
        let d = channels / phi;
        let dh = d / shape.heads;
        let conv_in = Conv::new(params, &format!("{name}.conv_in"), channels, d, 3, false, rng);
        let bn_in = BatchNorm::new(params, &format!("{name}.bn_in"), d);
        let mut proj = |p: &str, rng: &mut R| params.add(format!("{name}.attn.{p}"), kaiming(vec![d, d], d, 1.0, rng));
        let w_q = proj("w_q", rng);
        let w_k = proj("w_k", rng);
        let w_v = proj("w_v", rng);
        let w_o = proj("w_o", rng);
        let rel_h = params.add(
            format!("{name}.attn.rel_h"),
            Tensor::zeros(vec![2 * shape.group_h - 1, dh]).requires_grad(),
        );
        let rel_w = params.add(
            format!("{name}.attn.rel_w"),
            Tensor::zeros(vec![2 * shape.group_w - 1, dh]).requires_grad(),
        );
        let conv_out = Conv::new(params, &format!("{name}.conv_out"), d, channels, 3, false, rng);
        let bn_out = BatchNorm::new(params, &format!("{name}.bn_out"), channels);
        Ok(GtBlock {
            channels,
            bottleneck: d,
            shape,
            conv_in,
            bn_in,
            w_q,
            w_k,
            w_v,
            w_o,
            rel_h,
            rel_w,
            conv_out,
            bn_out,
        })
    }

    /// Every trainable tensor of the block except normalization scale/shift.
    pub fn weight_ids(&self) -> [ParamId; 8] {
        [
            self.conv_in.weight,
            self.w_q,
            self.w_k,
            self.w_v,
            self.w_o,
            self.rel_h,
            self.rel_w,
            self.conv_out.weight,
        ]
    }

    pub fn forward(&self, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let shape = ctx.graph.shape(x).to_vec();
        let [n, c, h, w] = shape[..] else {
            return Err(Error::invalid("gt_block", format!("expected N×C×H×W, got {shape:?}")));
        };
        if c != self.channels {
            return Err(Error::invalid("gt_block", format!("block expects {} channels, got {c}", self.channels)));
        }
        let (gh, gw) = (self.shape.group_h, self.shape.group_w);

        let y = self.conv_in.forward(ctx, x)?;
        let y = self.bn_in.forward(ctx, y)?;
        let y = ctx.graph.relu(y);

        let tokens = partition_groups(ctx.graph, y, gh, gw)?;
        let vars = MhsaVars {
            w_q: ctx.param(self.w_q),
            w_k: ctx.param(self.w_k),
            w_v: ctx.param(self.w_v),
            w_o: ctx.param(self.w_o),
            rel_h: ctx.param(self.rel_h),
            rel_w: ctx.param(self.rel_w),
        };
        let attended = mhsa(ctx.graph, tokens, &vars, self.shape)?.output;
        let y = merge_groups(ctx.graph, attended, n, h, w, gh, gw)?;

        let y = self.conv_out.forward(ctx, y)?;
        let y = self.bn_out.forward(ctx, y)?;
        ctx.graph.add(y, x)
    }
}
