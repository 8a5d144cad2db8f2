use super::graph::{GradSink, Graph, Op, Var};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before `log`.
pub const PROB_CLAMP: f64 = 1e-7;

impl Graph {
    /// Mean binary cross-entropy between probabilities `pred` and a binary
    /// `target` of the same size.
    pub fn bce(&mut self, pred: Var, target: &[f64]) -> Result<Var> {
        let n = self.shape(pred)[0];
        self.bce_weighted(pred, target, &vec![1.0; n])
    }

    /// Per-sample weighted BCE: `(1/N) Σ_i w_i · mean_p bce(pred_ip, target_ip)`,
    /// where `i` runs over the leading axis of `pred`.
    pub fn bce_weighted(&mut self, pred: Var, target: &[f64], weights: &[f64]) -> Result<Var> {
        let shape = self.shape(pred).to_vec();
        let p = self.data(pred);
        if target.len() != p.len() {
            return Err(Error::shape("bce", &shape, &[target.len()]));
        }
        let n = shape[0];
        if weights.len() != n {
            return Err(Error::invalid("bce", format!("{} weights for {n} samples", weights.len())));
        }
        let per = p.len() / n;
        let mut total = 0.0;
        let mut clamped = Vec::with_capacity(p.len());
        for (i, (&pv, &t)) in p.iter().zip(target).enumerate() {
            let c = pv.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            clamped.push(c != pv);
            total += weights[i / per] * -(t * c.ln() + (1.0 - t) * (1.0 - c).ln());
        }
        let value = total / p.len() as f64;
        Ok(self.push(
            vec![1],
            vec![value],
            Op::Bce {
                pred,
                target: target.to_vec(),
                weights: weights.to_vec(),
                clamped,
            },
            &[pred],
        ))
    }
}

pub(super) fn backward_bce(pred: Var, target: &[f64], weights: &[f64], clamped: &[bool], g: &[f64], sink: &mut GradSink<'_>) {
    let p = sink.value(pred).data().to_vec();
    let total = p.len() as f64;
    let per = p.len() / weights.len();
    if let Some(gp) = sink.slot(pred) {
        for i in 0..p.len() {
            if clamped[i] {
                continue;
            }
            let (pv, t) = (p[i], target[i]);
            gp[i] += g[0] * weights[i / per] / total * (-t / pv + (1.0 - t) / (1.0 - pv));
        }
    }
}
