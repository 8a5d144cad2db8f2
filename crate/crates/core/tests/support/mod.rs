//! Independent oracles shared by the integration tests. Nothing here calls
//! into the differentiation machinery under test except to build forward
//! values.
#![allow(dead_code)]

pub mod grads;

use gtseg_core::tensor::{Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, 1e-8)`
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = norm(a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(a.iter().copied()).max(norm(b.iter().copied())).max(1e-8);
    diff / scale
}

/// Compares reverse-mode gradients with central finite differences.
///
/// `build` maps the recorded inputs to an output of any shape; the scalar
/// under test is `Σ output ⊙ probe` with a fixed random probe. Returns the
/// relative error for every input.
pub fn gradcheck<F>(inputs: &[Tensor], build: F) -> Vec<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    let forward = |values: &[Tensor]| -> Vec<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.data(out).to_vec()
    };
    let base = forward(inputs);
    let mut probe_rng = rng(0x5eed);
    let probe: Vec<f64> = (0..base.len()).map(|_| probe_rng.random_range(-1.0..1.0)).collect();
    let objective = |values: &[Tensor]| -> f64 { forward(values).iter().zip(&probe).map(|(a, b)| a * b).sum() };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().requires_grad())).collect();
    let out = build(&mut g, &vars);
    let shape = g.shape(out).to_vec();
    let p = g.constant(Tensor::new(shape, probe.clone()).unwrap());
    let weighted = g.mul(out, p).unwrap();
    let loss = g.sum(weighted);
    let grads = g.backward(loss).unwrap();

    let mut errors = Vec::new();
    for (idx, input) in inputs.iter().enumerate() {
        let analytic = grads
            .wrt(vars[idx])
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![0.0; input.numel()]);
        let mut numeric = vec![0.0; input.numel()];
        let mut values = inputs.to_vec();
        for j in 0..input.numel() {
            let orig = input.data()[j];
            values[idx].data_mut()[j] = orig + FD_STEP;
            let up = objective(&values);
            values[idx].data_mut()[j] = orig - FD_STEP;
            let down = objective(&values);
            values[idx].data_mut()[j] = orig;
            numeric[j] = (up - down) / (2.0 * FD_STEP);
        }
        errors.push(rel_error(&analytic, &numeric));
    }
    errors
}

pub fn randn(shape: &[usize], seed: u64) -> Tensor {
    Tensor::randn(shape.to_vec(), 1.0, &mut rng(seed))
}

/// Values bounded away from zero so ReLU-style kinks are not straddled by
/// the finite-difference step.
pub fn randn_off_zero(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| {
        let mag: f64 = r.random_range(0.1..2.0);
        if r.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Plain triple loop `a[m×k] · b[k×n]`.
pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

pub fn naive_softmax(x: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Direct nested-loop cross-correlation of one `N×Cin×H×W` batch.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv(
    x: &[f64],
    w: &[f64],
    (n, cin, h, wd): (usize, usize, usize, usize),
    (cout, k): (usize, usize),
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * cout * ho * wo];
    for s in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = 0.0;
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x[((s * cin + ci) * h + iy as usize) * wd + ix as usize]
                                    * w[((co * cin + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((s * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

/// Per-pair attention loop. `x` is `n×d`, projections `d×d` (row-vector
/// convention), tables `(2g−1)×dh`. Returns `(output n×d, attention
/// heads×n×n)`.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_mhsa(
    x: &[f64],
    n: usize,
    d: usize,
    heads: usize,
    group_h: usize,
    group_w: usize,
    wq: &[f64],
    wk: &[f64],
    wv: &[f64],
    wo: &[f64],
    rel_h: &[f64],
    rel_w: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(n, group_h * group_w);
    let dh = d / heads;
    let q = naive_matmul(x, wq, n, d, d);
    let k = naive_matmul(x, wk, n, d, d);
    let v = naive_matmul(x, wv, n, d, d);
    let mut ctx = vec![0.0; n * d];
    let mut attn_all = vec![0.0; heads * n * n];
    for h in 0..heads {
        for i in 0..n {
            let (yi, xi) = ((i / group_w) as isize, (i % group_w) as isize);
            let mut logits = vec![0.0; n];
            for (j, logit) in logits.iter_mut().enumerate() {
                let (yj, xj) = ((j / group_w) as isize, (j % group_w) as isize);
                let ry = (yj - yi + group_h as isize - 1) as usize;
                let rx = (xj - xi + group_w as isize - 1) as usize;
                let mut content = 0.0;
                let mut position = 0.0;
                for c in 0..dh {
                    let qc = q[i * d + h * dh + c];
                    content += qc * k[j * d + h * dh + c];
                    position += qc * (rel_h[ry * dh + c] + rel_w[rx * dh + c]);
                }
                *logit = content + position;
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let s: f64 = e.iter().sum();
            for j in 0..n {
                let a = e[j] / s;
                attn_all[(h * n + i) * n + j] = a;
                for c in 0..dh {
                    ctx[i * d + h * dh + c] += a * v[j * d + h * dh + c];
                }
            }
        }
    }
    (naive_matmul(&ctx, wo, n, d, d), attn_all)
}

/// Scalar Adam on `f(w) = w²`, bias-corrected.
pub fn scalar_adam(w0: f64, lr: f64, beta1: f64, beta2: f64, eps: f64, steps: usize) -> f64 {
    let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
    for t in 1..=steps {
        let g = 2.0 * w;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        let mh = m / (1.0 - beta1.powi(t as i32));
        let vh = v / (1.0 - beta2.powi(t as i32));
        w -= lr * mh / (vh.sqrt() + eps);
    }
    w
}

/// Direct evaluation of `(1/N) Σ z(m)·exp(−j2πmk/N)` with no phase
/// reduction, returned as `(re, im)` pairs.
pub fn dft_oracle(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let n = points.len();
    (0..n)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (m, &(x, y)) in points.iter().enumerate() {
                let a = -2.0 * std::f64::consts::PI * (m * k) as f64 / n as f64;
                re += x * a.cos() - y * a.sin();
                im += x * a.sin() + y * a.cos();
            }
            (re / n as f64, im / n as f64)
        })
        .collect()
}

/// `K` harmonic magnitudes relative to the first, from [`dft_oracle`].
pub fn normalized_oracle(points: &[(f64, f64)], k: usize) -> Vec<f64> {
    let z = dft_oracle(points);
    let mag = |(re, im): (f64, f64)| (re * re + im * im).sqrt();
    let s = mag(z[1]);
    (2..k + 2).map(|i| mag(z[i]) / s).collect()
}

/// `n` points spaced evenly by arc length around an axis-aligned
/// rectangle, counter-clockwise from `(0, 0)`.
pub fn rectangle_points(w: f64, h: f64, n: usize) -> Vec<(f64, f64)> {
    let p = 2.0 * (w + h);
    (0..n)
        .map(|i| {
            let s = p * i as f64 / n as f64;
            if s < w {
                (s, 0.0)
            } else if s < w + h {
                (w, s - w)
            } else if s < 2.0 * w + h {
                (w - (s - w - h), h)
            } else {
                (0.0, h - (s - 2.0 * w - h))
            }
        })
        .collect()
}

/// Fraction of positive/negative pairs ranked correctly, ties counting half.
pub fn pairwise_auc(probs: &[f64], labels: &[u8]) -> f64 {
    let mut score = 0.0;
    let mut pairs = 0.0;
    for (i, &pi) in probs.iter().enumerate() {
        if labels[i] == 0 {
            continue;
        }
        for (j, &pj) in probs.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if pi > pj {
                score += 1.0;
            } else if pi == pj {
                score += 0.5;
            }
        }
    }
    score / pairs
}

/// Copies of a closed curve under translation, scaling about the origin,
/// rotation and cyclic start shifts, each labelled.
pub fn similarity_variants(points: &[(f64, f64)]) -> Vec<(String, Vec<(f64, f64)>)> {
    let map = |f: &dyn Fn(f64, f64) -> (f64, f64)| points.iter().map(|&(x, y)| f(x, y)).collect::<Vec<_>>();
    let mut out = vec![("translate (7.5, -3.25)".to_string(), map(&|x, y| (x + 7.5, y - 3.25)))];
    for s in [0.5, 3.0] {
        out.push((format!("scale x{s}"), map(&|x, y| (s * x, s * y))));
    }
    for deg in [30.0f64, 90.0] {
        let (sin, cos) = deg.to_radians().sin_cos();
        out.push((format!("rotate {deg} deg"), map(&|x, y| (cos * x - sin * y, sin * x + cos * y))));
    }
    for shift in [1, 17, 63] {
        let mut p = points.to_vec();
        p.rotate_left(shift);
        out.push((format!("start shift {shift}"), p));
    }
    out
}

/// Smooth closed curve with no rotational symmetry, `n` points uniform in angle.
pub fn lopsided_curve(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|m| {
            let t = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
            let r = 1.0 + 0.3 * (3.0 * t).cos() + 0.1 * (5.0 * t).sin() + 0.05 * (2.0 * t).cos();
            (r * t.cos(), r * t.sin())
        })
        .collect()
}
