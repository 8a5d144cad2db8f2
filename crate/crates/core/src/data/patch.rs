use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::{Error, Result};

/// `count` top-left corners drawn uniformly from the valid positions of a
/// `patch`×`patch` window in an `h`×`w` raster.
pub fn patch_positions(h: usize, w: usize, patch: usize, count: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if patch == 0 || patch > h || patch > w {
        return Err(Error::invalid("patch_sample", format!("patch {patch} does not fit a {h}x{w} image")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| (rng.random_range(0..=h - patch), rng.random_range(0..=w - patch)))
        .collect())
}

/// Crops `count` random patches, image and mask aligned. Patch ids are
/// `<id>_p<i>`.
pub fn patch_sample(s: &Sample, patch: usize, count: usize, seed: u64) -> Result<Vec<Sample>> {
    let (h, w) = s.image.dims();
    patch_positions(h, w, patch, count, seed)?
        .into_iter()
        .enumerate()
        .map(|(i, (y, x))| {
            Ok(Sample {
                image: s.image.crop(y, x, patch, patch)?,
                mask: s.mask.crop(y, x, patch, patch)?,
                id: format!("{}_p{i}", s.id),
            })
        })
        .collect()
}
