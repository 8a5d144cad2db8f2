use super::graph::{GradSink, Graph, Op, Var};
use crate::{Error, Result};

/// Lower clamp applied before `log`.
pub const LOG_FLOOR: f64 = 1e-7;

/// Number of elements in `b` if `b`'s shape is a trailing suffix of `a`'s.
fn suffix_len(a: &[usize], b: &[usize]) -> Option<usize> {
    if b.len() > a.len() || a[a.len() - b.len()..] != *b {
        return None;
    }
    Some(b.iter().product())
}

impl Graph {
    fn binary(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<(Vec<usize>, Vec<f64>)> {
        let (av, bv) = (self.value(a), self.value(b));
        let nb = suffix_len(av.shape(), bv.shape())
            .ok_or_else(|| Error::shape(op_name, av.shape(), bv.shape()))?;
        let bd = bv.data();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, bd[i % nb]))
            .collect();
        Ok((av.shape().to_vec(), data))
    }

    /// `a + b`, with `b` repeated along leading axes when its shape is a
    /// suffix of `a`'s.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, data) = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(shape, data, Op::Add { a, b }, &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, data) = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(shape, data, Op::Sub { a, b }, &[a, b]))
    }

    /// Elementwise product with the same broadcasting rule as [`Graph::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, data) = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(shape, data, Op::Mul { a, b }, &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let v = self.value(a);
        let data = v.data().iter().map(|x| x * factor).collect();
        self.push(v.shape().to_vec(), data, Op::Scale { a, factor }, &[a])
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| f(x)).collect();
        self.push(v.shape().to_vec(), data, op, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu { a }, |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid { a }, sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp { a }, f64::exp)
    }

    /// Natural log of `max(a, 1e-7)`.
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log { a }, |x| x.max(LOG_FLOOR).ln())
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.data(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum { a }, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let d = self.data(a);
        let m = d.iter().sum::<f64>() / d.len() as f64;
        self.push(vec![1], vec![m], Op::Mean { a }, &[a])
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(super) fn backward_add(a: Var, b: Var, sign: f64, g: &[f64], sink: &mut GradSink<'_>) {
    if let Some(ga) = sink.slot(a) {
        ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
    }
    if let Some(gb) = sink.slot(b) {
        let nb = gb.len();
        for (i, s) in g.iter().enumerate() {
            gb[i % nb] += sign * s;
        }
    }
}

pub(super) fn backward_mul(a: Var, b: Var, g: &[f64], sink: &mut GradSink<'_>) {
    let av = sink.value(a).data().to_vec();
    let bv = sink.value(b).data().to_vec();
    let nb = bv.len();
    if let Some(ga) = sink.slot(a) {
        for (i, d) in ga.iter_mut().enumerate() {
            *d += g[i] * bv[i % nb];
        }
    }
    if let Some(gb) = sink.slot(b) {
        for (i, s) in g.iter().enumerate() {
            gb[i % nb] += s * av[i];
        }
    }
}

pub(super) fn backward_scale(a: Var, factor: f64, g: &[f64], sink: &mut GradSink<'_>) {
    if let Some(ga) = sink.slot(a) {
        ga.iter_mut().zip(g).for_each(|(d, s)| *d += factor * s);
    }
}

fn backward_pointwise(a: Var, g: &[f64], sink: &mut GradSink<'_>, local: impl Fn(usize, f64) -> f64) {
    let x = sink.value(a).data().to_vec();
    if let Some(ga) = sink.slot(a) {
        for (i, d) in ga.iter_mut().enumerate() {
            *d += g[i] * local(i, x[i]);
        }
    }
}

pub(super) fn backward_relu(a: Var, g: &[f64], sink: &mut GradSink<'_>) {
    backward_pointwise(a, g, sink, |_, x| if x > 0.0 { 1.0 } else { 0.0 });
}

pub(super) fn backward_sigmoid(a: Var, out: &super::Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    let y = out.data();
    backward_pointwise(a, g, sink, |i, _| y[i] * (1.0 - y[i]));
}

pub(super) fn backward_exp(a: Var, out: &super::Tensor, g: &[f64], sink: &mut GradSink<'_>) {
    let y = out.data();
    backward_pointwise(a, g, sink, |i, _| y[i]);
}

pub(super) fn backward_log(a: Var, g: &[f64], sink: &mut GradSink<'_>) {
    backward_pointwise(a, g, sink, |_, x| if x > LOG_FLOOR { 1.0 / x } else { 0.0 });
}

pub(super) fn backward_sum(a: Var, factor: f64, g: &[f64], sink: &mut GradSink<'_>) {
    if let Some(ga) = sink.slot(a) {
        ga.iter_mut().for_each(|d| *d += factor * g[0]);
    }
}
