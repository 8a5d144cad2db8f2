use rand::Rng;

use crate::tensor::{Graph, MacScope, MacTally, Tensor, Var};
use crate::{Error, Result};

/// Static layout of a multi-head self-attention over one token group.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MhsaShape {
    pub heads: usize,
    pub group_h: usize,
    pub group_w: usize,
}

/// Graph handles for the attention weights.
#[derive(Clone, Copy, Debug)]
pub struct MhsaVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
    pub rel_h: Var,
    pub rel_w: Var,
}

pub struct MhsaOutput {
    /// `[B, n, d]`, same shape as the input tokens.
    pub output: Var,
    /// Row-stochastic attention weights, `[B·heads, n, n]`.
    pub attention: Var,
}

/// Multi-head self-attention with relative position logits over `B`
/// independent groups of `n = group_h·group_w` tokens of width `d`.
///
/// Per head, `logit(i, j) = qᵢ·kⱼ + qᵢ·(R_h[Δy] + R_w[Δx])` where
/// `(Δy, Δx)` is the displacement of token `j` from token `i`. Rows are
/// softmax-normalized, heads concatenated and projected by `w_o`. Products
/// are charged to the graph's MAC tally: q/k/v/o under projection, `qkᵀ`
/// and the weighted sum under attention.
pub fn mhsa(g: &mut Graph, tokens: Var, w: &MhsaVars, shape: MhsaShape) -> Result<MhsaOutput> {
    let ts = g.shape(tokens).to_vec();
    let [b, n, d] = ts[..] else {
        return Err(Error::invalid("mhsa", format!("expected [groups, tokens, dims], got {ts:?}")));
    };
    let MhsaShape { heads, group_h, group_w } = shape;
    if n != group_h * group_w {
        return Err(Error::invalid(
            "mhsa",
            format!("{n} tokens do not fill a {group_h}x{group_w} group"),
        ));
    }
    if heads == 0 || d % heads != 0 {
        return Err(Error::invalid("mhsa", format!("width {d} not divisible by {heads} heads")));
    }
    let dh = d / heads;

    let prev = g.set_mac_scope(MacScope::Projection);
    let q = g.matmul(tokens, w.w_q)?;
    let k = g.matmul(tokens, w.w_k)?;
    let v = g.matmul(tokens, w.w_v)?;

    let split = |g: &mut Graph, x: Var| -> Result<Var> {
        let r = g.reshape(x, &[b, n, heads, dh])?;
        let p = g.permute(r, &[0, 2, 1, 3])?;
        g.reshape(p, &[b * heads, n, dh])
    };
    let (q, k, v) = (split(g, q)?, split(g, k)?, split(g, v)?);

    g.set_mac_scope(MacScope::Attention);
    let kt = g.transpose(k)?;
    let content = g.matmul(q, kt)?;
    let position = g.rel_pos_logits(q, w.rel_h, w.rel_w, group_h, group_w)?;
    let logits = g.add(content, position)?;
    let attention = g.softmax(logits, 2)?;
    let ctx = g.matmul(attention, v)?;

    let r = g.reshape(ctx, &[b, heads, n, dh])?;
    let p = g.permute(r, &[0, 2, 1, 3])?;
    let merged = g.reshape(p, &[b, n, d])?;

    g.set_mac_scope(MacScope::Projection);
    let output = g.matmul(merged, w.w_o)?;
    g.set_mac_scope(prev);
    Ok(MhsaOutput { output, attention })
}

/// Owned attention weights. Projections are `d×d` and applied to row
/// vectors (`x·W`); relative tables are shared by all heads.
#[derive(Clone, Debug, PartialEq)]
pub struct MhsaWeights {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub rel_h: Tensor,
    pub rel_w: Tensor,
    pub shape: MhsaShape,
}

impl MhsaWeights {
    pub fn zeros(d: usize, shape: MhsaShape) -> Self {
        let dh = d / shape.heads.max(1);
        MhsaWeights {
            w_q: Tensor::zeros(vec![d, d]),
            w_k: Tensor::zeros(vec![d, d]),
            w_v: Tensor::zeros(vec![d, d]),
            w_o: Tensor::zeros(vec![d, d]),
            rel_h: Tensor::zeros(vec![2 * shape.group_h - 1, dh]),
            rel_w: Tensor::zeros(vec![2 * shape.group_w - 1, dh]),
            shape,
        }
    }

    /// Gaussian weights with standard deviation `std` everywhere.
    pub fn random<R: Rng + ?Sized>(d: usize, shape: MhsaShape, std: f64, rng: &mut R) -> Self {
        let dh = d / shape.heads.max(1);
        MhsaWeights {
            w_q: Tensor::randn(vec![d, d], std, rng),
            w_k: Tensor::randn(vec![d, d], std, rng),
            w_v: Tensor::randn(vec![d, d], std, rng),
            w_o: Tensor::randn(vec![d, d], std, rng),
            rel_h: Tensor::randn(vec![2 * shape.group_h - 1, dh], std, rng),
            rel_w: Tensor::randn(vec![2 * shape.group_w - 1, dh], std, rng),
            shape,
        }
    }

    pub fn attach(&self, g: &mut Graph) -> MhsaVars {
        MhsaVars {
            w_q: g.leaf(self.w_q.clone()),
            w_k: g.leaf(self.w_k.clone()),
            w_v: g.leaf(self.w_v.clone()),
            w_o: g.leaf(self.w_o.clone()),
            rel_h: g.leaf(self.rel_h.clone()),
            rel_w: g.leaf(self.rel_w.clone()),
        }
    }
}

/// Attention over one group (`[n, d]`) or a batch of groups (`[B, n, d]`).
pub fn mhsa_forward(tokens: &Tensor, weights: &MhsaWeights) -> Result<Tensor> {
    let mut g = Graph::new();
    let (x, orig) = batched(&mut g, tokens)?;
    let vars = weights.attach(&mut g);
    let out = mhsa(&mut g, x, &vars, weights.shape)?;
    g.value(out.output).clone().reshape(orig)
}

fn batched(g: &mut Graph, tokens: &Tensor) -> Result<(Var, Vec<usize>)> {
    let orig = tokens.shape().to_vec();
    let t = match orig.len() {
        2 => tokens.clone().reshape(vec![1, orig[0], orig[1]])?,
        3 => tokens.clone(),
        _ => return Err(Error::invalid("mhsa", format!("expected [n, d] or [B, n, d], got {orig:?}"))),
    };
    Ok((g.constant(t), orig))
}

/// Runs attention over `groups` random groups of `group_h·group_w` tokens of
/// width `d` and reports the multiply-accumulates actually executed.
pub fn count_mhsa_macs(groups: usize, d: usize, shape: MhsaShape, seed: u64) -> Result<MacTally> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = shape.group_h * shape.group_w;
    let tokens = Tensor::randn(vec![groups, n, d], 1.0, &mut rng);
    let weights = MhsaWeights::random(d, shape, (1.0 / d as f64).sqrt(), &mut rng);
    let mut g = Graph::new();
    let x = g.constant(tokens);
    let vars = weights.attach(&mut g);
    mhsa(&mut g, x, &vars, shape)?;
    Ok(g.tally())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn shape(heads: usize, gh: usize, gw: usize) -> MhsaShape {
        MhsaShape { heads, group_h: gh, group_w: gw }
    }

    #[test]
    fn single_token_attends_to_itself() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = MhsaWeights::random(4, shape(2, 1, 1), 0.7, &mut rng);
        let x = Tensor::randn(vec![1, 4], 1.0, &mut rng);
        let out = mhsa_forward(&x, &w).unwrap();
        // expected = x · w_v · w_o
        let mut g = Graph::new();
        let xv = g.constant(x);
        let wv = g.constant(w.w_v.clone());
        let wo = g.constant(w.w_o.clone());
        let a = g.matmul(xv, wv).unwrap();
        let e = g.matmul(a, wo).unwrap();
        for (o, e) in out.data().iter().zip(g.data(e)) {
            assert!((o - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_queries_give_uniform_attention() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut w = MhsaWeights::random(4, shape(2, 2, 2), 0.5, &mut rng);
        w.w_q = Tensor::zeros(vec![4, 4]);
        w.rel_h = Tensor::zeros(vec![3, 2]);
        w.rel_w = Tensor::zeros(vec![3, 2]);
        let x = Tensor::randn(vec![4, 4], 1.0, &mut rng);
        let out = mhsa_forward(&x, &w).unwrap();

        // mean value vector, then output projection
        let mut g = Graph::new();
        let xv = g.constant(x);
        let wv = g.constant(w.w_v.clone());
        let v = g.matmul(xv, wv).unwrap();
        let vd = g.data(v).to_vec();
        let mean: Vec<f64> = (0..4).map(|c| (0..4).map(|t| vd[t * 4 + c]).sum::<f64>() / 4.0).collect();
        let mv = g.constant(Tensor::new(vec![1, 4], mean).unwrap());
        let wo = g.constant(w.w_o.clone());
        let e = g.matmul(mv, wo).unwrap();
        let e = g.data(e);
        for t in 0..4 {
            for c in 0..4 {
                assert!((out.data()[t * 4 + c] - e[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn token_count_must_match_group() {
        let w = MhsaWeights::zeros(4, shape(2, 2, 2));
        assert!(mhsa_forward(&Tensor::zeros(vec![3, 4]), &w).is_err());
    }

    #[test]
    fn mac_tally_matches_closed_form() {
        let (n, d) = (16u64, 8u64);
        let t = count_mhsa_macs(3, d as usize, shape(2, 4, 4), 0).unwrap();
        assert_eq!(t.projection, 3 * 4 * n * d * d);
        assert_eq!(t.attention, 3 * 2 * n * n * d);
        // every head reads both tables once per token
        assert_eq!(t.position, 3 * 2 * n * (7 + 7) * (d / 2));
    }
}
