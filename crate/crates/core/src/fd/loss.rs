use serde::{Deserialize, Serialize};

use super::contour::{extract_contour, resample_contour, ContourSource};
use super::descriptor::{descriptor_distance, fourier_descriptor, normalize_descriptor};
use crate::tensor::{sigmoid, Graph, Var, PROB_CLAMP};
use crate::{Error, Image, Mask, Result};

/// Distance assigned when the prediction has no usable boundary.
pub const DEGENERATE_DISTANCE: f64 = 1.0;

/// Probability above which a pixel counts as foreground.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdParams {
    /// Sharpness of the shape factor.
    pub beta: f64,
    /// Number of normalized descriptors compared.
    pub k: usize,
    /// Points per resampled contour.
    pub n: usize,
}

impl Default for FdParams {
    fn default() -> Self {
        FdParams { beta: 10.0, k: 16, n: 128 }
    }
}

impl FdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.n < 4 || self.k == 0 || self.k + 2 > self.n {
            return Err(Error::Config(format!("need 1 ≤ K ≤ N − 2 and N ≥ 4, got K = {}, N = {}", self.k, self.n)));
        }
        Ok(())
    }
}

/// Why a mask produced no descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Degeneracy {
    Empty,
    /// Zero perimeter or vanishing first harmonic.
    NoScale,
}

/// Normalized descriptor of a mask's largest component.
pub fn mask_descriptor(mask: &Mask, params: &FdParams, source: ContourSource) -> Result<std::result::Result<Vec<f64>, Degeneracy>> {
    let mut contour = match extract_contour(mask) {
        Ok(c) => c,
        Err(Error::NoForeground) => return Ok(Err(Degeneracy::Empty)),
        Err(e) => return Err(e),
    };
    contour.source = source;
    let resampled = resample_contour(&contour, params.n)?;
    let d = fourier_descriptor(&resampled)?;
    match normalize_descriptor(&d, params.k) {
        Ok(v) => Ok(Ok(v)),
        Err(Error::DegenerateShape(_)) => Ok(Err(Degeneracy::NoScale)),
        Err(e) => Err(e),
    }
}

/// Shape comparison between a predicted and a reference mask.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShapeFactor {
    pub delta_z: f64,
    /// `σ(β·ΔZ)`, in `[0.5, 1)`.
    pub factor: f64,
    pub predicted: Option<Degeneracy>,
    pub reference: Option<Degeneracy>,
}

/// `ΔZ` between two masks and the resulting loss factor. An unusable
/// prediction is maximally wrong; two unusable masks agree.
pub fn shape_factor(predicted: &Mask, reference: &Mask, params: &FdParams) -> Result<ShapeFactor> {
    let a = mask_descriptor(predicted, params, ContourSource::Predicted)?;
    let b = mask_descriptor(reference, params, ContourSource::Reference)?;
    let delta_z = match (&a, &b) {
        (Ok(a), Ok(b)) => descriptor_distance(a, b)?,
        (Err(_), Err(_)) => 0.0,
        _ => DEGENERATE_DISTANCE,
    };
    Ok(ShapeFactor {
        delta_z,
        factor: sigmoid(params.beta * delta_z),
        predicted: a.err(),
        reference: b.err(),
    })
}

/// Mean binary cross-entropy with the same clamping as the graph op.
pub fn bce(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape("bce", &[pred.len()], &[target.len()]));
    }
    let s: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let c = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(t * c.ln() + (1.0 - t) * (1.0 - c).ln())
        })
        .sum();
    Ok(s / pred.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FdLoss {
    pub bce: f64,
    pub shape: ShapeFactor,
    /// `bce · factor`.
    pub loss: f64,
}

/// FD loss for one probability map against its binary target.
pub fn fd_loss(pred: &Image, target: &Mask, params: &FdParams) -> Result<FdLoss> {
    if pred.dims() != target.dims() {
        let (a, b) = (pred.dims(), target.dims());
        return Err(Error::shape("fd_loss", &[a.0, a.1], &[b.0, b.1]));
    }
    let t: Vec<f64> = target.data().iter().map(|&v| f64::from(v)).collect();
    let bce = bce(pred.data(), &t)?;
    let shape = shape_factor(&pred.threshold(THRESHOLD), target, params)?;
    Ok(FdLoss { bce, loss: bce * shape.factor, shape })
}

/// Records the batch FD loss on `g`: each sample's BCE is weighted by its
/// (constant) shape factor and the results are averaged. `pred` is
/// `N×1×H×W`; one target mask per sample.
pub fn fd_loss_graph(g: &mut Graph, pred: Var, targets: &[Mask], params: &FdParams) -> Result<(Var, Vec<ShapeFactor>)> {
    let shape = g.shape(pred).to_vec();
    let [n, 1, h, w] = shape[..] else {
        return Err(Error::invalid("fd_loss", format!("expected N×1×H×W probabilities, got {shape:?}")));
    };
    if targets.len() != n || targets.iter().any(|m| m.dims() != (h, w)) {
        return Err(Error::invalid("fd_loss", format!("{} targets do not match {shape:?}", targets.len())));
    }
    let mut factors = Vec::with_capacity(n);
    let per = h * w;
    for (i, t) in targets.iter().enumerate() {
        let p = Image::from_vec(h, w, g.data(pred)[i * per..(i + 1) * per].to_vec())?;
        factors.push(shape_factor(&p.threshold(THRESHOLD), t, params)?);
    }
    let target: Vec<f64> = targets.iter().flat_map(|m| m.data().iter().map(|&v| f64::from(v))).collect();
    let weights: Vec<f64> = factors.iter().map(|f| f.factor).collect();
    let loss = g.bce_weighted(pred, &target, &weights)?;
    Ok((loss, factors))
}
