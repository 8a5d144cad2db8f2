//! Samples, the synthetic generator, augmentation, patching, fold
//! assignment and the on-disk dataset layout.

mod augment;
mod patch;
pub mod pgm;
mod split;
mod synth;

use std::path::Path;

pub use augment::{
    apply_plan, augment, flip_h, flip_v, resize_bilinear, resize_nearest, rot90, rotate_bilinear, rotate_nearest,
    AugmentPlan, MAX_SMALL_ANGLE_DEG, MIN_CROP,
};
pub use patch::{patch_positions, patch_sample};
pub use split::{kfold_split, FoldSplit};
pub use synth::{gaussian_blur, recipe, synth_generate, Blob, Recipe, NOISE_STD};

use crate::{Error, Image, Mask, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub mask: Mask,
    pub id: String,
}

impl Sample {
    pub fn new(image: Image, mask: Mask, id: impl Into<String>) -> Result<Self> {
        if image.dims() != mask.dims() {
            let (a, b) = (image.dims(), mask.dims());
            return Err(Error::shape("sample", &[a.0, a.1], &[b.0, b.1]));
        }
        if !mask.is_binary() {
            return Err(Error::Format("mask is not binary".into()));
        }
        Ok(Sample { image, mask, id: id.into() })
    }
}

pub const FOLDS_FILE: &str = "folds.txt";

/// Writes `images/<id>.pgm`, `masks/<id>.pgm` and, if given, `folds.txt`.
pub fn write_dataset(root: impl AsRef<Path>, samples: &[Sample], split: Option<&FoldSplit>) -> Result<()> {
    let root = root.as_ref();
    std::fs::create_dir_all(root.join("images"))?;
    std::fs::create_dir_all(root.join("masks"))?;
    for s in samples {
        pgm::save_pgm(root.join("images").join(format!("{}.pgm", s.id)), &s.image)?;
        pgm::save_mask(root.join("masks").join(format!("{}.pgm", s.id)), &s.mask)?;
    }
    if let Some(split) = split {
        std::fs::write(root.join(FOLDS_FILE), split.to_text())?;
    }
    Ok(())
}

/// Reads every `images/*.pgm` with its mask, sorted by id, plus
/// `folds.txt` when present.
pub fn read_dataset(root: impl AsRef<Path>) -> Result<(Vec<Sample>, Option<FoldSplit>)> {
    let root = root.as_ref();
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(root.join("images"))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "pgm") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    let samples = ids
        .into_iter()
        .map(|id| {
            let image = pgm::load_pgm(root.join("images").join(format!("{id}.pgm")))?;
            let mask = pgm::load_mask(root.join("masks").join(format!("{id}.pgm")))?;
            Sample::new(image, mask, id)
        })
        .collect::<Result<Vec<_>>>()?;
    let folds = root.join(FOLDS_FILE);
    let split = if folds.exists() {
        Some(FoldSplit::from_text(&std::fs::read_to_string(folds)?)?)
    } else {
        None
    };
    Ok((samples, split))
}
