use rand::Rng;

use crate::tensor::{BatchStats, Graph, ParamId, ParamSet, Tensor, Var};
use crate::Result;

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running estimates are collected for update.
    Train,
    /// Stored running statistics.
    Eval,
}

/// State threaded through a forward pass.
pub struct Ctx<'a> {
    pub graph: &'a mut Graph,
    pub params: &'a ParamSet,
    pub mode: Mode,
    /// Batch statistics observed in [`Mode::Train`], to be folded into the
    /// running estimates once the step is done.
    pub bn_updates: Vec<(BatchNorm, BatchStats)>,
}

impl<'a> Ctx<'a> {
    pub fn new(graph: &'a mut Graph, params: &'a ParamSet, mode: Mode) -> Self {
        Ctx {
            graph,
            params,
            mode,
            bn_updates: Vec::new(),
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.graph.param(self.params, id)
    }
}

pub(crate) fn kaiming<R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, gain: f64, rng: &mut R) -> Tensor {
    Tensor::randn(shape, (gain / fan_in as f64).sqrt(), rng).requires_grad()
}

/// Square-kernel convolution.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    /// `kernel`×`kernel` "same" convolution with Kaiming (ReLU gain) init.
    pub fn new<R: Rng + ?Sized>(
        params: &mut ParamSet,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = c_in * kernel * kernel;
        let weight = params.add(
            format!("{name}.weight"),
            kaiming(vec![c_out, c_in, kernel, kernel], fan_in, 2.0, rng),
        );
        let bias = bias.then(|| params.add(format!("{name}.bias"), Tensor::zeros(vec![c_out]).requires_grad()));
        Conv {
            weight,
            bias,
            stride: 1,
            padding: kernel / 2,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = self.bias.map(|b| ctx.param(b));
        ctx.graph.conv2d(x, w, b, self.stride, self.padding)
    }
}

/// Per-channel batch normalization with learnable scale and shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn new(params: &mut ParamSet, name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: params.add(format!("{name}.gamma"), Tensor::full(vec![channels], 1.0).requires_grad()),
            beta: params.add(format!("{name}.beta"), Tensor::zeros(vec![channels]).requires_grad()),
            running_mean: params.add(format!("{name}.running_mean"), Tensor::zeros(vec![channels])),
            running_var: params.add(format!("{name}.running_var"), Tensor::full(vec![channels], 1.0)),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        match ctx.mode {
            Mode::Train => {
                let (y, stats) = ctx.graph.batch_norm_train(x, gamma, beta, BN_EPS)?;
                ctx.bn_updates.push((*self, stats));
                Ok(y)
            }
            Mode::Eval => {
                let mean = ctx.params.get(self.running_mean).data();
                let var = ctx.params.get(self.running_var).data();
                ctx.graph.batch_norm_eval(x, gamma, beta, mean, var, BN_EPS)
            }
        }
    }

    /// Exponential moving average update of the running statistics.
    pub fn update_running(&self, params: &mut ParamSet, stats: &BatchStats) {
        let blend = |t: &mut Tensor, obs: &[f64]| {
            for (r, o) in t.data_mut().iter_mut().zip(obs) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * o;
            }
        };
        blend(params.get_mut(self.running_mean), &stats.mean);
        blend(params.get_mut(self.running_var), &stats.var);
    }
}

/// Convolution → batch norm → ReLU.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvBnRelu {
    pub conv: Conv,
    pub bn: BatchNorm,
}

impl ConvBnRelu {
    pub fn new<R: Rng + ?Sized>(params: &mut ParamSet, name: &str, c_in: usize, c_out: usize, kernel: usize, rng: &mut R) -> Self {
        ConvBnRelu {
            conv: Conv::new(params, &format!("{name}.conv"), c_in, c_out, kernel, false, rng),
            bn: BatchNorm::new(params, &format!("{name}.bn"), c_out),
        }
    }

    pub fn forward(&self, ctx: &mut Ctx<'_>, x: Var) -> Result<Var> {
        let y = self.conv.forward(ctx, x)?;
        let y = self.bn.forward(ctx, y)?;
        Ok(ctx.graph.relu(y))
    }
}
