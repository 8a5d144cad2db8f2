use super::kernels::ConvGeometry;
use super::params::{ParamId, ParamSet};
use super::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Multiply-accumulate counts, bucketed by what the product computes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacTally {
    /// Matrix products issued under [`MacScope::Projection`].
    pub projection: u64,
    /// Matrix products issued under [`MacScope::Attention`].
    pub attention: u64,
    /// Relative position logits.
    pub position: u64,
    pub convolution: u64,
    /// Matrix products issued under [`MacScope::Other`].
    pub other: u64,
}

impl MacTally {
    pub fn total(&self) -> u64 {
        self.projection + self.attention + self.position + self.convolution + self.other
    }
}

/// Bucket that subsequent matrix products are charged to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MacScope {
    Projection,
    Attention,
    #[default]
    Other,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct MatMulDims {
    pub batch: usize,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub a_batched: bool,
    pub b_batched: bool,
}

pub(crate) enum Op {
    Leaf,
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, factor: f64 },
    Relu { a: Var },
    Sigmoid { a: Var },
    Exp { a: Var },
    Log { a: Var },
    Sum { a: Var },
    Mean { a: Var },
    MatMul { a: Var, b: Var, dims: MatMulDims },
    TransposeLast2 { a: Var },
    Reshape { a: Var },
    Permute { a: Var, perm: Vec<usize> },
    Softmax { a: Var, axis: usize },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geo: ConvGeometry,
        batch: usize,
        out_channels: usize,
    },
    MaxPool2 { a: Var, argmax: Vec<usize> },
    Upsample2 { a: Var },
    Concat { parts: Vec<Var> },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
    },
    RelPos {
        q: Var,
        rel_h: Var,
        rel_w: Var,
        group_h: usize,
        group_w: usize,
    },
    Bce {
        pred: Var,
        target: Vec<f64>,
        weights: Vec<f64>,
        clamped: Vec<bool>,
    },
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
}

/// Define-by-run tape. Each op evaluates eagerly and records how to
/// propagate gradients back to its inputs.
#[derive(Default)]
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
    tally: MacTally,
    scope: MacScope,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// ∂loss/∂var, or `None` when `var` does not influence the loss.
    pub fn wrt(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    pub fn params(&self) -> impl Iterator<Item = (ParamId, Option<&[f64]>)> + '_ {
        self.params.iter().map(|&(id, v)| (id, self.wrt(v)))
    }
}

/// Mutable view over per-node gradient buffers handed to op backward rules.
pub(crate) struct GradSink<'a> {
    grads: &'a mut [Option<Vec<f64>>],
    nodes: &'a [Node],
}

impl GradSink<'_> {
    /// Zero-initialized accumulation buffer for `v`, or `None` if `v` is
    /// not differentiable.
    pub fn slot(&mut self, v: Var) -> Option<&mut [f64]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let len = node.value.numel();
        Some(self.grads[v.0].get_or_insert_with(|| vec![0.0; len]))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. It is differentiable iff the tensor was
    /// marked with [`Tensor::requires_grad`].
    pub fn leaf(&mut self, mut tensor: Tensor) -> Var {
        let requires_grad = tensor.requires_grad;
        tensor.grad = None;
        self.push_raw(tensor, Op::Leaf, requires_grad)
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, mut tensor: Tensor) -> Var {
        tensor.requires_grad = false;
        self.leaf(tensor)
    }

    /// Records a copy of a parameter; its gradient is reported under `id`.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let t = params.get(id);
        let var = self.push_raw(
            Tensor {
                shape: t.shape.clone(),
                data: t.data.clone(),
                requires_grad: false,
                grad: None,
            },
            Op::Leaf,
            t.requires_grad,
        );
        self.params.push((id, var));
        var
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value.data
    }

    pub fn tally(&self) -> MacTally {
        self.tally
    }

    /// Sets the bucket for subsequent matrix products, returning the old one.
    pub fn set_mac_scope(&mut self, scope: MacScope) -> MacScope {
        std::mem::replace(&mut self.scope, scope)
    }

    pub(crate) fn charge_matmul(&mut self, macs: u64) {
        match self.scope {
            MacScope::Projection => self.tally.projection += macs,
            MacScope::Attention => self.tally.attention += macs,
            MacScope::Other => self.tally.other += macs,
        }
    }

    pub(crate) fn charge_conv(&mut self, macs: u64) {
        self.tally.convolution += macs;
    }

    pub(crate) fn charge_position(&mut self, macs: u64) {
        self.tally.position += macs;
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Appends an op result; it is differentiable iff any input is.
    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(
            Tensor {
                shape,
                data,
                requires_grad: false,
                grad: None,
            },
            op,
            requires_grad,
        )
    }

    /// Reverse sweep from a single-element `loss`. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let Graph { nodes, params, .. } = self;
        let loss_node = &nodes[loss.0];
        if loss_node.value.numel() != 1 {
            return Err(Error::NonScalarLoss(loss_node.value.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        if loss_node.requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else {
                continue;
            };
            let node = &nodes[i];
            let mut sink = GradSink {
                grads: &mut grads,
                nodes: &nodes,
            };
            backward_op(&node.op, &node.value, &gout, &mut sink);
            grads[i] = Some(gout);
        }
        Ok(Gradients { grads, params })
    }
}

fn backward_op(op: &Op, out: &Tensor, gout: &[f64], sink: &mut GradSink<'_>) {
    use super::{conv, elementwise as ew, linalg, loss, norm};
    match op {
        Op::Leaf => {}
        Op::Add { a, b } => ew::backward_add(*a, *b, 1.0, gout, sink),
        Op::Sub { a, b } => ew::backward_add(*a, *b, -1.0, gout, sink),
        Op::Mul { a, b } => ew::backward_mul(*a, *b, gout, sink),
        Op::Scale { a, factor } => ew::backward_scale(*a, *factor, gout, sink),
        Op::Relu { a } => ew::backward_relu(*a, gout, sink),
        Op::Sigmoid { a } => ew::backward_sigmoid(*a, out, gout, sink),
        Op::Exp { a } => ew::backward_exp(*a, out, gout, sink),
        Op::Log { a } => ew::backward_log(*a, gout, sink),
        Op::Sum { a } => ew::backward_sum(*a, 1.0, gout, sink),
        Op::Mean { a } => {
            let n = sink.value(*a).numel() as f64;
            ew::backward_sum(*a, 1.0 / n, gout, sink)
        }
        Op::MatMul { a, b, dims } => linalg::backward_matmul(*a, *b, dims, gout, sink),
        Op::TransposeLast2 { a } => linalg::backward_transpose(*a, gout, sink),
        Op::Reshape { a } => linalg::backward_reshape(*a, gout, sink),
        Op::Permute { a, perm } => linalg::backward_permute(*a, perm, gout, sink),
        Op::Softmax { a, axis } => linalg::backward_softmax(*a, *axis, out, gout, sink),
        Op::Conv2d {
            input,
            weight,
            bias,
            geo,
            batch,
            out_channels,
        } => conv::backward_conv2d(*input, *weight, *bias, geo, *batch, *out_channels, gout, sink),
        Op::MaxPool2 { a, argmax } => conv::backward_maxpool(*a, argmax, gout, sink),
        Op::Upsample2 { a } => conv::backward_upsample(*a, gout, sink),
        Op::Concat { parts } => conv::backward_concat(parts, gout, sink),
        Op::BatchNorm {
            x,
            gamma,
            beta,
            x_hat,
            inv_std,
            train,
        } => norm::backward_batch_norm(*x, *gamma, *beta, x_hat, inv_std, *train, gout, sink),
        Op::RelPos {
            q,
            rel_h,
            rel_w,
            group_h,
            group_w,
        } => linalg::backward_rel_pos(*q, *rel_h, *rel_w, *group_h, *group_w, gout, sink),
        Op::Bce {
            pred,
            target,
            weights,
            clamped,
        } => loss::backward_bce(*pred, target, weights, clamped, gout, sink),
    }
}
