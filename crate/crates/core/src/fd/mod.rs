//! Shape-sensitive loss from Fourier descriptors of mask boundaries.
//!
//! A boundary is traced, resampled to `N` points, transformed with a direct
//! DFT and reduced to `K` magnitudes relative to the first harmonic. The
//! mean distance `ΔZ` between two such vectors scales BCE by `σ(β·ΔZ)`.

mod contour;
mod descriptor;
mod loss;

pub use contour::{components, extract_contour, largest_component, resample_contour, Contour, ContourSource};
pub use descriptor::{descriptor_distance, fourier_descriptor, normalize_descriptor, DescriptorVector, MIN_FUNDAMENTAL};
pub use loss::{
    bce, fd_loss, fd_loss_graph, mask_descriptor, shape_factor, Degeneracy, FdLoss, FdParams, ShapeFactor,
    DEGENERATE_DISTANCE, THRESHOLD,
};
