use super::graph::{GradSink, Graph, Op, Var};
use super::kernels::{col2im, gemm_nn, gemm_nt, gemm_tn, im2col, ConvGeometry};
use crate::{Error, Result};

fn nchw(op: &'static str, shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::invalid(op, format!("expected N×C×H×W input, got {shape:?}"))),
    }
}

impl Graph {
    /// 2-D cross-correlation of `N×C_in×H×W` input with a
    /// `C_out×C_in×k×k` kernel and optional per-channel bias.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (n, c, h, w) = nchw("conv2d", self.shape(input))?;
        let ws = self.shape(weight).to_vec();
        let [c_out, c_in, kh, kw] = ws[..] else {
            return Err(Error::invalid("conv2d", format!("expected 4-d weight, got {ws:?}")));
        };
        if c_in != c {
            return Err(Error::shape("conv2d", self.shape(input), &ws));
        }
        if kh != kw || !(kh == 1 || kh == 3) {
            return Err(Error::invalid("conv2d", format!("kernel must be 1x1 or 3x3, got {kh}x{kw}")));
        }
        if !(stride == 1 || stride == 2) {
            return Err(Error::invalid("conv2d", format!("stride must be 1 or 2, got {stride}")));
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(Error::invalid("conv2d", format!("kernel {kh} larger than padded input {h}x{w}")));
        }
        if let Some(b) = bias {
            if self.shape(b) != [c_out] {
                return Err(Error::shape("conv2d bias", self.shape(b), &[c_out]));
            }
        }
        let geo = ConvGeometry {
            channels: c,
            height: h,
            width: w,
            kernel: kh,
            stride,
            padding,
        };
        let (rows, cols) = (geo.col_rows(), geo.col_cols());
        let mut out = vec![0.0; n * c_out * cols];
        let mut col_buf = vec![0.0; if geo.is_pointwise() { 0 } else { rows * cols }];
        {
            let x = self.data(input);
            let wd = self.data(weight);
            let bd = bias.map(|b| self.data(b));
            for s in 0..n {
                let img = &x[s * c * h * w..(s + 1) * c * h * w];
                let cols_ref: &[f64] = if geo.is_pointwise() {
                    img
                } else {
                    im2col(&geo, img, &mut col_buf);
                    &col_buf
                };
                let dst = &mut out[s * c_out * cols..(s + 1) * c_out * cols];
                if let Some(bd) = bd {
                    for (co, chunk) in dst.chunks_mut(cols).enumerate() {
                        chunk.fill(bd[co]);
                    }
                }
                gemm_nn(c_out, rows, cols, wd, cols_ref, dst);
            }
        }
        self.charge_conv((n * c_out * rows * cols) as u64);
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(
            vec![n, c_out, geo.out_height(), geo.out_width()],
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geo,
                batch: n,
                out_channels: c_out,
            },
            &inputs,
        ))
    }

    /// 2×2 max pooling with stride 2.
    pub fn max_pool2(&mut self, a: Var) -> Result<Var> {
        let (n, c, h, w) = nchw("max_pool2", self.shape(a))?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::invalid("max_pool2", format!("odd spatial extent {h}x{w}")));
        }
        let (ho, wo) = (h / 2, w / 2);
        let x = self.data(a);
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        Ok(self.push(vec![n, c, ho, wo], out, Op::MaxPool2 { a, argmax }, &[a]))
    }

    /// Nearest-neighbour ×2 upsampling.
    pub fn upsample2(&mut self, a: Var) -> Result<Var> {
        let (n, c, h, w) = nchw("upsample2", self.shape(a))?;
        let x = self.data(a);
        let (ho, wo) = (2 * h, 2 * w);
        let mut out = vec![0.0; n * c * ho * wo];
        for plane in 0..n * c {
            for oy in 0..ho {
                for ox in 0..wo {
                    out[(plane * ho + oy) * wo + ox] = x[(plane * h + oy / 2) * w + ox / 2];
                }
            }
        }
        Ok(self.push(vec![n, c, ho, wo], out, Op::Upsample2 { a }, &[a]))
    }

    /// Concatenates `N×C_i×H×W` tensors along the channel axis.
    pub fn concat_channels(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::invalid("concat_channels", "no inputs"));
        };
        let (n, _, h, w) = nchw("concat_channels", self.shape(first))?;
        let mut total_c = 0;
        for &p in parts {
            let (pn, pc, ph, pw) = nchw("concat_channels", self.shape(p))?;
            if (pn, ph, pw) != (n, h, w) {
                return Err(Error::shape("concat_channels", self.shape(first), self.shape(p)));
            }
            total_c += pc;
        }
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total_c * plane);
        for s in 0..n {
            for &p in parts {
                let pc = self.shape(p)[1];
                out.extend_from_slice(&self.data(p)[s * pc * plane..(s + 1) * pc * plane]);
            }
        }
        Ok(self.push(
            vec![n, total_c, h, w],
            out,
            Op::Concat { parts: parts.to_vec() },
            parts,
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward_conv2d(
    input: Var,
    weight: Var,
    bias: Option<Var>,
    geo: &ConvGeometry,
    batch: usize,
    c_out: usize,
    g: &[f64],
    sink: &mut GradSink<'_>,
) {
    let (rows, cols) = (geo.col_rows(), geo.col_cols());
    let img_len = geo.channels * geo.height * geo.width;
    if let Some(b) = bias {
        if let Some(gb) = sink.slot(b) {
            for s in 0..batch {
                for (co, gbv) in gb.iter_mut().enumerate() {
                    let off = (s * c_out + co) * cols;
                    *gbv += g[off..off + cols].iter().sum::<f64>();
                }
            }
        }
    }
    let x = sink.value(input).data().to_vec();
    let wd = sink.value(weight).data().to_vec();
    let mut col_buf = vec![0.0; if geo.is_pointwise() { 0 } else { rows * cols }];
    if let Some(gw) = sink.slot(weight) {
        for s in 0..batch {
            let img = &x[s * img_len..(s + 1) * img_len];
            let cols_ref: &[f64] = if geo.is_pointwise() {
                img
            } else {
                im2col(geo, img, &mut col_buf);
                &col_buf
            };
            gemm_nt(c_out, cols, rows, &g[s * c_out * cols..], cols_ref, gw);
        }
    }
    if let Some(gx) = sink.slot(input) {
        let mut dcols = vec![0.0; rows * cols];
        for s in 0..batch {
            let dst = &mut gx[s * img_len..(s + 1) * img_len];
            if geo.is_pointwise() {
                gemm_tn(rows, c_out, cols, &wd, &g[s * c_out * cols..], dst);
            } else {
                dcols.fill(0.0);
                gemm_tn(rows, c_out, cols, &wd, &g[s * c_out * cols..], &mut dcols);
                col2im(geo, &dcols, dst);
            }
        }
    }
}

pub(super) fn backward_maxpool(a: Var, argmax: &[usize], g: &[f64], sink: &mut GradSink<'_>) {
    if let Some(ga) = sink.slot(a) {
        for (&idx, &gv) in argmax.iter().zip(g) {
            ga[idx] += gv;
        }
    }
}

pub(super) fn backward_upsample(a: Var, g: &[f64], sink: &mut GradSink<'_>) {
    let shape = sink.value(a).shape().to_vec();
    let (h, w) = (shape[2], shape[3]);
    let (ho, wo) = (2 * h, 2 * w);
    if let Some(ga) = sink.slot(a) {
        for plane in 0..shape[0] * shape[1] {
            for oy in 0..ho {
                for ox in 0..wo {
                    ga[(plane * h + oy / 2) * w + ox / 2] += g[(plane * ho + oy) * wo + ox];
                }
            }
        }
    }
}

pub(super) fn backward_concat(parts: &[Var], g: &[f64], sink: &mut GradSink<'_>) {
    let shape = sink.value(parts[0]).shape().to_vec();
    let (n, plane) = (shape[0], shape[2] * shape[3]);
    let chans: Vec<usize> = parts.iter().map(|&p| sink.value(p).shape()[1]).collect();
    let total: usize = chans.iter().sum();
    let mut c_off = 0;
    for (&p, &pc) in parts.iter().zip(&chans) {
        if let Some(gp) = sink.slot(p) {
            for s in 0..n {
                let src = &g[(s * total + c_off) * plane..(s * total + c_off + pc) * plane];
                gp[s * pc * plane..(s + 1) * pc * plane]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(d, v)| *d += v);
            }
        }
        c_off += pc;
    }
}
