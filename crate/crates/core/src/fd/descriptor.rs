use std::f64::consts::PI;

use num_complex::Complex64;

use super::contour::Contour;
use crate::{Error, Result};

/// Below this `|Z(1)|` a contour has no usable scale reference.
pub const MIN_FUNDAMENTAL: f64 = 1e-12;

/// Fourier coefficients `Z(0..N)` of a closed contour, with `1/N`
/// normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorVector {
    pub coefficients: Vec<Complex64>,
    pub n_points: usize,
}

/// Direct-sum DFT of `z(m) = x_m + j·y_m`.
pub fn fourier_descriptor(contour: &Contour) -> Result<DescriptorVector> {
    let n = contour.len();
    if n < 4 {
        return Err(Error::invalid("fourier_descriptor", format!("need at least 4 points, got {n}")));
    }
    let z: Vec<Complex64> = contour.points.iter().map(|&(x, y)| Complex64::new(x, y)).collect();
    // Exact phase table indexed by (m·k) mod N.
    let twiddle: Vec<Complex64> = (0..n).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64)).collect();
    let coefficients = (0..n)
        .map(|k| {
            let s: Complex64 = z.iter().enumerate().map(|(m, zm)| zm * twiddle[(m * k) % n]).sum();
            s / n as f64
        })
        .collect();
    Ok(DescriptorVector { coefficients, n_points: n })
}

/// `(|Z(2)|, …, |Z(K+1)|) / |Z(1)|`: drops location, scale, rotation and
/// starting point.
pub fn normalize_descriptor(d: &DescriptorVector, k: usize) -> Result<Vec<f64>> {
    if k + 2 > d.n_points {
        return Err(Error::invalid(
            "normalize_descriptor",
            format!("K = {k} exceeds N − 2 = {}", d.n_points.saturating_sub(2)),
        ));
    }
    let scale = d.coefficients[1].norm();
    if scale < MIN_FUNDAMENTAL {
        return Err(Error::DegenerateShape(format!("|Z(1)| = {scale:e}")));
    }
    Ok(d.coefficients[2..k + 2].iter().map(|z| z.norm() / scale).collect())
}

/// Mean absolute difference of two normalized descriptors.
pub fn descriptor_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("descriptor_distance", &[a.len()], &[b.len()]));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}
