//! Gradient cases for every differentiable op and the group Transformer
//! block. Each case runs [`INSTANCES`] random instances and keeps the worst
//! relative error against central finite differences.

use gtseg_core::model::{merge_groups, mhsa, partition_groups, Ctx, GtBlock, MhsaShape, MhsaVars, MhsaWeights, Mode};
use gtseg_core::tensor::{Graph, ParamSet, Tensor, Var};

use super::{gradcheck, randn, randn_off_zero, rel_error, rng, FD_STEP};

pub const TOL: f64 = 1e-5;
pub const INSTANCES: u64 = 10;

#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: String,
    pub checks: usize,
    pub worst: f64,
}

impl Outcome {
    fn new(name: String) -> Self {
        Outcome { name, checks: 0, worst: 0.0 }
    }

    fn record(&mut self, e: f64) {
        self.checks += 1;
        // NaN must not look like a pass
        self.worst = if e.is_nan() { f64::INFINITY } else { self.worst.max(e) };
    }

    pub fn passed(&self) -> bool {
        self.worst < TOL
    }
}

fn check<F>(out: &mut Vec<Outcome>, name: &str, make: impl Fn(u64) -> Vec<Tensor>, build: F)
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let mut o = Outcome::new(name.to_string());
    for seed in 0..INSTANCES {
        for e in gradcheck(&make(seed), &build) {
            o.record(e);
        }
    }
    out.push(o);
}

/// Every case, in a fixed order.
pub fn all() -> Vec<Outcome> {
    let mut out = Vec::new();
    for case in CASES {
        case(&mut out);
    }
    out
}

pub const CASES: [fn(&mut Vec<Outcome>); 13] = [
    binary_elementwise,
    unary_elementwise,
    matmul_variants,
    layout_ops,
    convolution,
    resampling_and_concat,
    batch_norm,
    relative_position_logits,
    cross_entropy,
    attention,
    grouping,
    gt_block_wrt_input,
    gt_block_wrt_weights,
];

pub fn binary_elementwise(out: &mut Vec<Outcome>) {
    let pair = |s: u64| vec![randn(&[3, 4], 10 * s), randn(&[3, 4], 10 * s + 1)];
    check(out, "add", pair, |g, v| g.add(v[0], v[1]).unwrap());
    check(out, "sub", pair, |g, v| g.sub(v[0], v[1]).unwrap());
    check(out, "mul", pair, |g, v| g.mul(v[0], v[1]).unwrap());
    let bcast = |s: u64| vec![randn(&[2, 3, 4], 10 * s), randn(&[3, 4], 10 * s + 1)];
    check(out, "add_broadcast", bcast, |g, v| g.add(v[0], v[1]).unwrap());
    check(out, "mul_broadcast", bcast, |g, v| g.mul(v[0], v[1]).unwrap());
}

pub fn unary_elementwise(out: &mut Vec<Outcome>) {
    let one = |s: u64| vec![randn(&[2, 5], s)];
    check(out, "scale", one, |g, v| g.scale(v[0], -1.7));
    check(out, "relu", |s| vec![randn_off_zero(&[2, 5], s)], |g, v| g.relu(v[0]));
    check(out, "sigmoid", one, |g, v| g.sigmoid(v[0]));
    check(out, "exp", one, |g, v| g.exp(v[0]));
    check(out, 
        "log",
        |s| vec![Tensor::uniform(vec![2, 5], 0.2, 3.0, &mut rng(s))],
        |g, v| g.log(v[0]),
    );
    check(out, "sum", one, |g, v| g.sum(v[0]));
    check(out, "mean", one, |g, v| g.mean(v[0]));
}

pub fn matmul_variants(out: &mut Vec<Outcome>) {
    check(out, 
        "matmul_2d",
        |s| vec![randn(&[4, 5], 2 * s), randn(&[5, 3], 2 * s + 1)],
        |g, v| g.matmul(v[0], v[1]).unwrap(),
    );
    check(out, 
        "matmul_batched",
        |s| vec![randn(&[2, 4, 5], 2 * s), randn(&[2, 5, 3], 2 * s + 1)],
        |g, v| g.matmul(v[0], v[1]).unwrap(),
    );
    check(out, 
        "matmul_shared_rhs",
        |s| vec![randn(&[3, 4, 5], 2 * s), randn(&[5, 2], 2 * s + 1)],
        |g, v| g.matmul(v[0], v[1]).unwrap(),
    );
}

pub fn layout_ops(out: &mut Vec<Outcome>) {
    let one = |s: u64| vec![randn(&[2, 3, 4], s)];
    check(out, "transpose", one, |g, v| g.transpose(v[0]).unwrap());
    check(out, "reshape", one, |g, v| g.reshape(v[0], &[6, 4]).unwrap());
    check(out, "permute", one, |g, v| g.permute(v[0], &[2, 0, 1]).unwrap());
    check(out, "softmax_last", one, |g, v| g.softmax(v[0], 2).unwrap());
    check(out, "softmax_middle", one, |g, v| g.softmax(v[0], 1).unwrap());
}

pub fn convolution(out: &mut Vec<Outcome>) {
    for (k, stride, pad) in [(3, 1, 1), (3, 2, 1), (1, 1, 0), (1, 2, 0)] {
        check(
            out,
            &format!("conv{k}x{k}_s{stride}"),
            |s| {
                vec![
                    randn(&[2, 2, 6, 6], 3 * s),
                    randn(&[3, 2, k, k], 3 * s + 1),
                    randn(&[3], 3 * s + 2),
                ]
            },
            |g, v| g.conv2d(v[0], v[1], Some(v[2]), stride, pad).unwrap(),
        );
    }
}

pub fn resampling_and_concat(out: &mut Vec<Outcome>) {
    check(out, "max_pool2", |s| vec![randn(&[2, 2, 4, 6], s)], |g, v| g.max_pool2(v[0]).unwrap());
    check(out, "upsample2", |s| vec![randn(&[1, 2, 3, 2], s)], |g, v| g.upsample2(v[0]).unwrap());
    check(out, 
        "concat",
        |s| vec![randn(&[2, 1, 3, 3], 2 * s), randn(&[2, 3, 3, 3], 2 * s + 1)],
        |g, v| g.concat_channels(&[v[0], v[1]]).unwrap(),
    );
}

pub fn batch_norm(out: &mut Vec<Outcome>) {
    let inputs = |s: u64| {
        vec![
            randn(&[3, 2, 3, 3], 3 * s),
            Tensor::uniform(vec![2], 0.5, 1.5, &mut rng(3 * s + 1)),
            randn(&[2], 3 * s + 2),
        ]
    };
    check(out, "batch_norm_train", inputs, |g, v| g.batch_norm_train(v[0], v[1], v[2], 1e-5).unwrap().0);
    check(out, "batch_norm_eval", inputs, |g, v| {
        g.batch_norm_eval(v[0], v[1], v[2], &[0.3, -0.2], &[1.5, 0.7], 1e-5).unwrap()
    });
}

pub fn relative_position_logits(out: &mut Vec<Outcome>) {
    // q: [batch, n, dh] with n = 2×3 group; tables (2g−1)×dh.
    check(out, 
        "rel_pos",
        |s| vec![randn(&[2, 6, 3], 3 * s), randn(&[3, 3], 3 * s + 1), randn(&[5, 3], 3 * s + 2)],
        |g, v| g.rel_pos_logits(v[0], v[1], v[2], 2, 3).unwrap(),
    );
}

pub fn cross_entropy(out: &mut Vec<Outcome>) {
    let target = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
    let logits = |s: u64| vec![randn(&[2, 1, 2, 2], s)];
    check(out, "bce", logits, |g, v| {
        let p = g.sigmoid(v[0]);
        g.bce(p, &target).unwrap()
    });
    check(out, "bce_weighted", logits, |g, v| {
        let p = g.sigmoid(v[0]);
        g.bce_weighted(p, &target, &[0.6, 0.9]).unwrap()
    });
}

pub fn attention(out: &mut Vec<Outcome>) {
    let shape = MhsaShape { heads: 2, group_h: 2, group_w: 2 };
    check(out, 
        "mhsa",
        |s| {
            let mut r = rng(100 + s);
            let w = MhsaWeights::random(4, shape, 0.7, &mut r);
            vec![
                randn(&[3, 4, 4], s),
                w.w_q.clone(),
                w.w_k.clone(),
                w.w_v.clone(),
                w.w_o.clone(),
                Tensor::randn(w.rel_h.shape().to_vec(), 0.5, &mut r),
                Tensor::randn(w.rel_w.shape().to_vec(), 0.5, &mut r),
            ]
        },
        |g, v| {
            let vars = MhsaVars {
                w_q: v[1],
                w_k: v[2],
                w_v: v[3],
                w_o: v[4],
                rel_h: v[5],
                rel_w: v[6],
            };
            mhsa(g, v[0], &vars, shape).unwrap().output
        },
    );
}

pub fn grouping(out: &mut Vec<Outcome>) {
    check(out, "partition", |s| vec![randn(&[2, 3, 4, 6], s)], |g, v| partition_groups(g, v[0], 2, 3).unwrap());
    check(out, 
        "merge",
        |s| vec![randn(&[8, 6, 3], s)],
        |g, v| merge_groups(g, v[0], 2, 4, 6, 2, 3).unwrap(),
    );
}

fn block_fixture(seed: u64) -> (ParamSet, GtBlock, Tensor) {
    let mut params = ParamSet::new();
    let shape = MhsaShape { heads: 2, group_h: 2, group_w: 2 };
    let mut r = rng(500 + seed);
    let block = GtBlock::new(&mut params, "b", 4, 2, shape, &mut r).unwrap();
    for id in [block.rel_h, block.rel_w, block.bn_in.beta, block.bn_out.beta] {
        let t = params.get_mut(id);
        let fresh = Tensor::randn(t.shape().to_vec(), 0.3, &mut r);
        t.data_mut().copy_from_slice(fresh.data());
    }
    (params, block, randn(&[2, 4, 4, 4], seed))
}

fn block_output(params: &ParamSet, block: &GtBlock, mode: Mode, g: &mut Graph, x: Var) -> Var {
    let mut ctx = Ctx::new(g, params, mode);
    block.forward(&mut ctx, x).unwrap()
}

pub fn gt_block_wrt_input(out: &mut Vec<Outcome>) {
    for mode in [Mode::Train, Mode::Eval] {
        let mut o = Outcome::new(format!("gt_block_input_{mode:?}").to_lowercase());
        for seed in 0..INSTANCES {
            let (params, block, x) = block_fixture(seed);
            o.record(gradcheck(&[x], |g, v| block_output(&params, &block, mode, g, v[0]))[0]);
        }
        out.push(o);
    }
}

pub fn gt_block_wrt_weights(out: &mut Vec<Outcome>) {
    let mut o = Outcome::new("gt_block_weights".into());
    for seed in 0..INSTANCES {
        let (mut params, block, x) = block_fixture(seed);
        let probe = randn(&[2, 4, 4, 4], 900 + seed);
        let objective = |params: &ParamSet| -> f64 {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let out = block_output(params, &block, Mode::Train, &mut g, xv);
            g.data(out).iter().zip(probe.data()).map(|(a, b)| a * b).sum()
        };

        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let out = block_output(&params, &block, Mode::Train, &mut g, xv);
        let p = g.constant(probe.clone());
        let weighted = g.mul(out, p).unwrap();
        let loss = g.sum(weighted);
        params.zero_grad();
        params.accumulate(&g.backward(loss).unwrap()).unwrap();

        let ids: Vec<_> = params.iter().filter(|(_, _, t)| t.is_trainable()).map(|(id, _, _)| id).collect();
        for id in ids {
            let analytic = params.get(id).grad().unwrap().to_vec();
            let mut numeric = vec![0.0; analytic.len()];
            for (j, slot) in numeric.iter_mut().enumerate() {
                let orig = params.get(id).data()[j];
                params.get_mut(id).data_mut()[j] = orig + FD_STEP;
                let up = objective(&params);
                params.get_mut(id).data_mut()[j] = orig - FD_STEP;
                let down = objective(&params);
                params.get_mut(id).data_mut()[j] = orig;
                *slot = (up - down) / (2.0 * FD_STEP);
            }
            o.record(rel_error(&analytic, &numeric));
        }
    }
    out.push(o);
}
