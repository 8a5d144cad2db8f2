use super::graph::{GradSink, Graph, MatMulDims, Op, Var};
use super::kernels::{gemm_nn, gemm_nt, gemm_tn};
use super::strides;
use crate::{Error, Result};

impl Graph {
    /// Matrix product of rank-2 or rank-3 operands. A rank-2 operand is
    /// shared across the batch of a rank-3 partner.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let split = |s: &[usize]| -> Option<(Option<usize>, usize, usize)> {
            match s.len() {
                2 => Some((None, s[0], s[1])),
                3 => Some((Some(s[0]), s[1], s[2])),
                _ => None,
            }
        };
        let (Some((ba, m, k)), Some((bb, k2, n))) = (split(&sa), split(&sb)) else {
            return Err(Error::invalid(
                "matmul",
                format!("operands must be rank 2 or 3, got {sa:?} and {sb:?}"),
            ));
        };
        if k != k2 {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let batch = match (ba, bb) {
            (Some(x), Some(y)) if x != y => return Err(Error::shape("matmul", &sa, &sb)),
            (Some(x), _) | (None, Some(x)) => x,
            (None, None) => 1,
        };
        let dims = MatMulDims {
            batch,
            m,
            k,
            n,
            a_batched: ba.is_some(),
            b_batched: bb.is_some(),
        };
        let mut out = vec![0.0; batch * m * n];
        {
            let (ad, bd) = (self.data(a), self.data(b));
            for bi in 0..batch {
                let a_off = if dims.a_batched { bi * m * k } else { 0 };
                let b_off = if dims.b_batched { bi * k * n } else { 0 };
                gemm_nn(m, k, n, &ad[a_off..], &bd[b_off..], &mut out[bi * m * n..(bi + 1) * m * n]);
            }
        }
        self.charge_matmul((batch * m * k * n) as u64);
        let shape = if ba.is_some() || bb.is_some() {
            vec![batch, m, n]
        } else {
            vec![m, n]
        };
        Ok(self.push(shape, out, Op::MatMul { a, b, dims }, &[a, b]))
    }

    /// Swaps the two trailing axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if shape.len() < 2 {
            return Err(Error::invalid("transpose", format!("rank {} < 2", shape.len())));
        }
        let r = shape.len();
        let (rows, cols) = (shape[r - 2], shape[r - 1]);
        let mut out_shape = shape.clone();
        out_shape.swap(r - 2, r - 1);
        let data = transpose_blocks(self.data(a), rows, cols);
        Ok(self.push(out_shape, data, Op::TransposeLast2 { a }, &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let cur = self.shape(a);
        if shape.iter().product::<usize>() != cur.iter().product::<usize>() || shape.contains(&0) {
            return Err(Error::shape("reshape", cur, shape));
        }
        let data = self.data(a).to_vec();
        Ok(self.push(shape.to_vec(), data, Op::Reshape { a }, &[a]))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, a: Var, perm: &[usize]) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        if perm.len() != shape.len() || perm.iter().any(|&p| p >= shape.len() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid(
                "permute",
                format!("{perm:?} is not a permutation of the axes of {shape:?}"),
            ));
        }
        let (out_shape, data) = permute_data(&shape, self.data(a), perm);
        Ok(self.push(out_shape, data, Op::Permute { a, perm: perm.to_vec() }, &[a]))
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(a).to_vec();
        if axis >= shape.len() {
            return Err(Error::invalid(
                "softmax",
                format!("axis {axis} out of range for {shape:?}"),
            ));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let x = self.data(a);
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let max = (0..len).map(|j| x[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for j in 0..len {
                    let e = (x[idx(j)] - max).exp();
                    out[idx(j)] = e;
                    total += e;
                }
                for j in 0..len {
                    out[idx(j)] /= total;
                }
            }
        }
        Ok(self.push(shape, out, Op::Softmax { a, axis }, &[a]))
    }

    /// Relative-position attention logits for tokens laid out row-major on
    /// a `group_h × group_w` grid:
    ///
    /// `out[b, i, j] = q[b, i] · (rel_h[yj - yi + group_h - 1] + rel_w[xj - xi + group_w - 1])`
    ///
    /// `q` is `[B, n, d]` with `n = group_h · group_w`; the tables are
    /// `[(2·group_h - 1), d]` and `[(2·group_w - 1), d]`.
    pub fn rel_pos_logits(&mut self, q: Var, rel_h: Var, rel_w: Var, group_h: usize, group_w: usize) -> Result<Var> {
        let qs = self.shape(q).to_vec();
        let n = group_h * group_w;
        if qs.len() != 3 || qs[1] != n {
            return Err(Error::invalid(
                "rel_pos_logits",
                format!("queries {qs:?} do not hold {n} tokens of a {group_h}x{group_w} group"),
            ));
        }
        let (batch, d) = (qs[0], qs[2]);
        let (hs, ws) = (self.shape(rel_h).to_vec(), self.shape(rel_w).to_vec());
        if hs != [2 * group_h - 1, d] || ws != [2 * group_w - 1, d] {
            return Err(Error::invalid(
                "rel_pos_logits",
                format!("tables {hs:?}/{ws:?} do not match group {group_h}x{group_w} with {d} dims"),
            ));
        }
        let (nh, nw) = (2 * group_h - 1, 2 * group_w - 1);
        let (qd, rh, rw) = (self.data(q), self.data(rel_h), self.data(rel_w));
        let mut out = vec![0.0; batch * n * n];
        let mut qh = vec![0.0; nh];
        let mut qw = vec![0.0; nw];
        for b in 0..batch {
            for i in 0..n {
                let qi = &qd[(b * n + i) * d..(b * n + i + 1) * d];
                qh.fill(0.0);
                qw.fill(0.0);
                gemm_nt(1, d, nh, qi, rh, &mut qh);
                gemm_nt(1, d, nw, qi, rw, &mut qw);
                let (yi, xi) = (i / group_w, i % group_w);
                let row = &mut out[(b * n + i) * n..(b * n + i + 1) * n];
                for (j, o) in row.iter_mut().enumerate() {
                    let (yj, xj) = (j / group_w, j % group_w);
                    *o = qh[yj + group_h - 1 - yi] + qw[xj + group_w - 1 - xi];
                }
            }
        }
        self.charge_position((batch * n * (nh + nw) * d) as u64);
        Ok(self.push(
            vec![batch, n, n],
            out,
            Op::RelPos {
                q,
                rel_h,
                rel_w,
                group_h,
                group_w,
            },
            &[q, rel_h, rel_w],
        ))
    }
}

fn transpose_blocks(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let block = rows * cols;
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks(block).zip(out.chunks_mut(block)) {
        for r in 0..rows {
            for c in 0..cols {
                dst[c * rows + r] = src[r * cols + c];
            }
        }
    }
    out
}

/// `(outer, len, inner)` extents around `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub(crate) fn permute_data(shape: &[usize], data: &[f64], perm: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let in_strides = strides(shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(data.len());
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..data.len() {
        out.push(data[offset]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            offset += src_strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            offset -= src_strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    (out_shape, out)
}

pub(super) fn backward_matmul(a: Var, b: Var, dims: &MatMulDims, g: &[f64], sink: &mut GradSink<'_>) {
    let MatMulDims {
        batch,
        m,
        k,
        n,
        a_batched,
        b_batched,
    } = *dims;
    let ad = sink.value(a).data().to_vec();
    let bd = sink.value(b).data().to_vec();
    if let Some(ga) = sink.slot(a) {
        for bi in 0..batch {
            let a_off = if a_batched { bi * m * k } else { 0 };
            let b_off = if b_batched { bi * k * n } else { 0 };
            gemm_nt(m, n, k, &g[bi * m * n..], &bd[b_off..], &mut ga[a_off..a_off + m * k]);
        }
    }
    if let Some(gb) = sink.slot(b) {
        for bi in 0..batch {
            let a_off = if a_batched { bi * m * k } else { 0 };
            let b_off = if b_batched { bi * k * n } else { 0 };
            gemm_tn(k, m, n, &ad[a_off..], &g[bi * m * n..], &mut gb[b_off..b_off + k * n]);
        }
    }
}

pub(super) fn backward_transpose(a: Var, g: &[f64], sink: &mut GradSink<'_>) {
    let shape = sink.value(a).shape().to_vec();
    let r = shape.len();
    // g has the swapped layout: rows' = cols, cols' = rows.
    let back = transpose_blocks(g, shape[r - 1], shape[r - 2]);
    if let Some(ga) = sink.slot(a) {
        ga.iter_mut().zip(&back).for_each(|(d, s)| *d += s);
    }
}

pub(super) fn backward_reshape(a: Var, g: &[f64], sink: &mut GradSink<'_>) {
    if let Some(ga) = sink.slot(a) {
        ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
    }
}

pub(super) fn backward_permute(a: Var, perm: &[usize], g: &[f64], sink: &mut GradSink<'_>) {
    let in_shape = sink.value(a).shape().to_vec();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let mut inverse = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inverse[p] = i;
    }
    let (_, back) = permute_data(&out_shape, g, &inverse);
    if let Some(ga) = sink.slot(a) {
        ga.iter_mut().zip(&back).for_each(|(d, s)| *d += s);
    }
}

pub(super) fn backward_softmax(a: Var, axis: usize, out: &super::Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    let (outer, len, inner) = axis_split(out.shape(), axis);
    let y = out.data();
    let Some(ga) = sink.slot(a) else {
        return;
    };
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let dot: f64 = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
            for j in 0..len {
                ga[idx(j)] += y[idx(j)] * (g[idx(j)] - dot);
            }
        }
    }
}

pub(super) fn backward_rel_pos(
    q: Var,
    rel_h: Var,
    rel_w: Var,
    group_h: usize,
    group_w: usize,
    g: &[f64],
    sink: &mut GradSink<'_>,
) {
    let n = group_h * group_w;
    let qs = sink.value(q).shape().to_vec();
    let (batch, d) = (qs[0], qs[2]);
    let (nh, nw) = (2 * group_h - 1, 2 * group_w - 1);
    let qd = sink.value(q).data().to_vec();
    let rh = sink.value(rel_h).data().to_vec();
    let rw = sink.value(rel_w).data().to_vec();

    // Gradients w.r.t. the per-token projections q·R_h and q·R_w.
    let mut gqh = vec![0.0; batch * n * nh];
    let mut gqw = vec![0.0; batch * n * nw];
    for b in 0..batch {
        for i in 0..n {
            let (yi, xi) = (i / group_w, i % group_w);
            let row = &g[(b * n + i) * n..(b * n + i + 1) * n];
            let gh = &mut gqh[(b * n + i) * nh..(b * n + i + 1) * nh];
            for (j, &gv) in row.iter().enumerate() {
                gh[j / group_w + group_h - 1 - yi] += gv;
            }
            let gw = &mut gqw[(b * n + i) * nw..(b * n + i + 1) * nw];
            for (j, &gv) in row.iter().enumerate() {
                gw[j % group_w + group_w - 1 - xi] += gv;
            }
        }
    }
    let rows = batch * n;
    if let Some(gq) = sink.slot(q) {
        gemm_nn(rows, nh, d, &gqh, &rh, gq);
        gemm_nn(rows, nw, d, &gqw, &rw, gq);
    }
    if let Some(grh) = sink.slot(rel_h) {
        gemm_tn(nh, rows, d, &gqh, &qd, grh);
    }
    if let Some(grw) = sink.slot(rel_w) {
        gemm_tn(nw, rows, d, &gqw, &qd, grw);
    }
}
