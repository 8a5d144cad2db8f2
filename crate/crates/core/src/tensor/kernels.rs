//! Dense inner loops shared by the graph ops. All kernels accumulate into
//! `out` rather than overwrite it.

/// Below this many multiply-accumulates the plain loops beat packing.
const SMALL_GEMM: usize = 8192;

/// `out[m×n] += op(a)·op(b)` through the packed kernel, with operands
/// addressed by row/column strides.
#[allow(clippy::too_many_arguments)]
fn packed(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    out: &mut [f64],
) {
    assert!((m - 1) * rsa + (k - 1) * csa < a.len());
    assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(out.len() >= m * n);
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            1.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn trivial(m: usize, k: usize, n: usize) -> bool {
    m == 0 || k == 0 || n == 0
}

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn gemm_nn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    if trivial(m, k, n) {
        return;
    }
    if m * k * n >= SMALL_GEMM {
        return packed(m, k, n, a, (k, 1), b, (n, 1), out);
    }
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            for (o, &bv) in out_row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aik * bv;
            }
        }
    }
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn gemm_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    if trivial(m, k, n) {
        return;
    }
    if m * k * n >= SMALL_GEMM {
        return packed(m, k, n, a, (k, 1), b, (1, k), out);
    }
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let dot: f64 = a_row.iter().zip(&b[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum();
            out[i * n + j] += dot;
        }
    }
}

/// `out[m×n] += a[k×m]ᵀ · b[k×n]`
pub fn gemm_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    if trivial(m, k, n) {
        return;
    }
    if m * k * n >= SMALL_GEMM {
        return packed(m, k, n, a, (1, m), b, (n, 1), out);
    }
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &api) in a[p * m..(p + 1) * m].iter().enumerate() {
            for (o, &bv) in out[i * n..(i + 1) * n].iter_mut().zip(b_row) {
                *o += api * bv;
            }
        }
    }
}

/// Geometry of a square-kernel 2-D correlation on one image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_height() * self.out_width()
    }

    /// True when the column matrix is the input itself.
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Output columns `lo..hi` whose stride-1 tap at offset `kx` lands inside
/// a row of `width` pixels.
fn valid_span(kx: usize, padding: usize, width: usize, wo: usize) -> (usize, usize) {
    let lo = padding.saturating_sub(kx).min(wo);
    let hi = (width + padding).saturating_sub(kx).min(wo).max(lo);
    (lo, hi)
}

/// Unfolds one `C×H×W` image into a `(C·k·k) × (Ho·Wo)` column matrix.
pub fn im2col(geo: &ConvGeometry, input: &[f64], cols: &mut [f64]) {
    let (ho, wo) = (geo.out_height(), geo.out_width());
    let k = geo.kernel;
    let pad = geo.padding as isize;
    for c in 0..geo.channels {
        let plane = &input[c * geo.height * geo.width..(c + 1) * geo.height * geo.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * geo.stride + ky) as isize - pad;
                    let dst_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= geo.height as isize {
                        dst_row.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * geo.width..(iy as usize + 1) * geo.width];
                    if geo.stride == 1 {
                        let (lo, hi) = valid_span(kx, geo.padding, geo.width, wo);
                        dst_row[..lo].fill(0.0);
                        dst_row[hi..].fill(0.0);
                        if lo < hi {
                            let off = lo + kx - geo.padding;
                            dst_row[lo..hi].copy_from_slice(&src[off..off + hi - lo]);
                        }
                        continue;
                    }
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * geo.stride + kx) as isize - pad;
                        *d = if ix < 0 || ix >= geo.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
pub fn col2im(geo: &ConvGeometry, cols: &[f64], input_grad: &mut [f64]) {
    let (ho, wo) = (geo.out_height(), geo.out_width());
    let k = geo.kernel;
    let pad = geo.padding as isize;
    for c in 0..geo.channels {
        let plane = &mut input_grad[c * geo.height * geo.width..(c + 1) * geo.height * geo.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * geo.stride + ky) as isize - pad;
                    if iy < 0 || iy >= geo.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * geo.width..(iy as usize + 1) * geo.width];
                    if geo.stride == 1 {
                        let (lo, hi) = valid_span(kx, geo.padding, geo.width, wo);
                        if lo < hi {
                            let off = lo + kx - geo.padding;
                            for (d, s) in dst[off..off + hi - lo].iter_mut().zip(&src[oy * wo + lo..oy * wo + hi]) {
                                *d += s;
                            }
                        }
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * geo.stride + kx) as isize - pad;
                        if ix >= 0 && ix < geo.width as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}
