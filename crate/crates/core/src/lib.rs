//! GT U-Net: a U-shaped encoder/decoder whose stages are group Transformer
//! blocks, trained with a shape-sensitive Fourier descriptor loss.
//!
//! The crate is self-contained: a small define-by-run autodiff engine
//! ([`tensor`]), the network and its attention cost model ([`model`]), the
//! contour/descriptor loss ([`fd`]), a synthetic data pipeline ([`data`]) and
//! segmentation metrics ([`metrics`]).

pub mod data;
pub mod error;
pub mod fd;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
pub use grid::{Grid, Image, Mask};
