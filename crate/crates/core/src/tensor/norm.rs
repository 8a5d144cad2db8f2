use super::graph::{GradSink, Graph, Op, Var};
use crate::{Error, Result};

/// Per-channel statistics of one training-mode batch normalization call.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, as used for the running estimate.
    pub var: Vec<f64>,
}

impl Graph {
    fn bn_check(&self, x: Var, gamma: Var, beta: Var) -> Result<(usize, usize, usize)> {
        let shape = self.shape(x);
        let [n, c, h, w] = shape[..] else {
            return Err(Error::invalid("batch_norm", format!("expected N×C×H×W, got {shape:?}")));
        };
        for p in [gamma, beta] {
            if self.shape(p) != [c] {
                return Err(Error::shape("batch_norm", shape, self.shape(p)));
            }
        }
        Ok((n, c, h * w))
    }

    fn bn_apply(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], inv_std: Vec<f64>, train: bool) -> Var {
        let shape = self.shape(x).to_vec();
        let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
        let (xd, gd, bd) = (self.data(x), self.data(gamma), self.data(beta));
        let mut x_hat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * plane;
                for i in off..off + plane {
                    let xh = (xd[i] - mean[ch]) * inv_std[ch];
                    x_hat[i] = xh;
                    out[i] = gd[ch] * xh + bd[ch];
                }
            }
        }
        self.push(
            shape,
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat,
                inv_std,
                train,
            },
            &[x, gamma, beta],
        )
    }

    /// Batch normalization using the statistics of `x` itself.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let (n, c, plane) = self.bn_check(x, gamma, beta)?;
        let xd = self.data(x);
        let count = (n * plane) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let vals = || (0..n).flat_map(move |s| xd[(s * c + ch) * plane..(s * c + ch + 1) * plane].iter());
            let m = vals().sum::<f64>() / count;
            mean[ch] = m;
            var[ch] = vals().map(|v| (v - m) * (v - m)).sum::<f64>() / count;
        }
        let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let unbiased = if count > 1.0 {
            var.iter().map(|v| v * count / (count - 1.0)).collect()
        } else {
            var.clone()
        };
        let out = self.bn_apply(x, gamma, beta, &mean, inv_std, true);
        Ok((out, BatchStats { mean, var: unbiased }))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
        let (_, c, _) = self.bn_check(x, gamma, beta)?;
        if mean.len() != c || var.len() != c {
            return Err(Error::invalid("batch_norm", format!("running statistics do not have {c} channels")));
        }
        let inv_std = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        Ok(self.bn_apply(x, gamma, beta, mean, inv_std, false))
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward_batch_norm(
    x: Var,
    gamma: Var,
    beta: Var,
    x_hat: &[f64],
    inv_std: &[f64],
    train: bool,
    g: &[f64],
    sink: &mut GradSink<'_>,
) {
    let shape = sink.value(x).shape().to_vec();
    let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    let gd = sink.value(gamma).data().to_vec();
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * plane;
            for i in off..off + plane {
                sum_g[ch] += g[i];
                sum_gx[ch] += g[i] * x_hat[i];
            }
        }
    }
    if let Some(gg) = sink.slot(gamma) {
        gg.iter_mut().zip(&sum_gx).for_each(|(d, v)| *d += v);
    }
    if let Some(gb) = sink.slot(beta) {
        gb.iter_mut().zip(&sum_g).for_each(|(d, v)| *d += v);
    }
    if let Some(gx) = sink.slot(x) {
        let count = (n * plane) as f64;
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * plane;
                let scale = gd[ch] * inv_std[ch];
                for i in off..off + plane {
                    gx[i] += if train {
                        scale * (g[i] - sum_g[ch] / count - x_hat[i] * sum_gx[ch] / count)
                    } else {
                        scale * g[i]
                    };
                }
            }
        }
    }
}
