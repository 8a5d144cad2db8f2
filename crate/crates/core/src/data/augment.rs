use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Sample;
use crate::{Grid, Image, Mask};

pub const MIN_CROP: f64 = 0.8;
pub const MAX_SMALL_ANGLE_DEG: f64 = 15.0;

/// One draw of the augmentation coins. `None`/`0`/`false` fields are
/// no-ops.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AugmentPlan {
    /// Fraction of each side kept by the center crop.
    pub crop: Option<f64>,
    /// Quarter turns, counter-clockwise on screen.
    pub quarter_turns: u8,
    /// Extra rotation in degrees.
    pub small_angle: Option<f64>,
    pub flip_h: bool,
    pub flip_v: bool,
}

impl AugmentPlan {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        AugmentPlan {
            crop: rng.random_bool(0.5).then(|| rng.random_range(MIN_CROP..=1.0)),
            quarter_turns: rng.random_range(0..4),
            small_angle: rng
                .random_bool(0.5)
                .then(|| rng.random_range(-MAX_SMALL_ANGLE_DEG..=MAX_SMALL_ANGLE_DEG)),
            flip_h: rng.random_bool(0.5),
            flip_v: rng.random_bool(0.5),
        }
    }
}

/// Applies crop-and-resize, rotation, then flips.
pub fn apply_plan(s: &Sample, plan: &AugmentPlan) -> Sample {
    let mut image = s.image.clone();
    let mut mask = s.mask.clone();
    if let Some(frac) = plan.crop {
        let (h, w) = image.dims();
        let ch = ((h as f64 * frac).round() as usize).clamp(1, h);
        let cw = ((w as f64 * frac).round() as usize).clamp(1, w);
        let (y0, x0) = ((h - ch) / 2, (w - cw) / 2);
        image = resize_bilinear(&image.crop(y0, x0, ch, cw).expect("window inside"), h, w);
        mask = resize_nearest(&mask.crop(y0, x0, ch, cw).expect("window inside"), h, w);
    }
    for _ in 0..plan.quarter_turns % 4 {
        image = rot90(&image);
        mask = rot90(&mask);
    }
    if let Some(deg) = plan.small_angle {
        image = rotate_bilinear(&image, deg);
        mask = rotate_nearest(&mask, deg);
    }
    if plan.flip_h {
        image = flip_h(&image);
        mask = flip_h(&mask);
    }
    if plan.flip_v {
        image = flip_v(&image);
        mask = flip_v(&mask);
    }
    Sample {
        image,
        mask,
        id: s.id.clone(),
    }
}

/// Random augmentation, a pure function of the sample and `seed`.
pub fn augment(s: &Sample, seed: u64) -> Sample {
    apply_plan(s, &AugmentPlan::draw(&mut ChaCha8Rng::seed_from_u64(seed)))
}

pub fn flip_h<T: Clone>(g: &Grid<T>) -> Grid<T> {
    let w = g.width();
    Grid::from_fn(g.height(), w, |y, x| g.get(y, w - 1 - x).clone())
}

pub fn flip_v<T: Clone>(g: &Grid<T>) -> Grid<T> {
    let h = g.height();
    Grid::from_fn(h, g.width(), |y, x| g.get(h - 1 - y, x).clone())
}

/// Quarter turn counter-clockwise; swaps the extents.
pub fn rot90<T: Clone>(g: &Grid<T>) -> Grid<T> {
    let (h, w) = g.dims();
    Grid::from_fn(w, h, |y, x| g.get(x, w - 1 - y).clone())
}

// Source coordinate for pixel-centre aligned scaling.
fn source(dst: usize, dst_len: usize, src_len: usize) -> f64 {
    (dst as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5
}

pub fn resize_nearest<T: Clone>(g: &Grid<T>, h: usize, w: usize) -> Grid<T> {
    let (sh, sw) = g.dims();
    Grid::from_fn(h, w, |y, x| {
        let sy = ((source(y, h, sh) + 0.5).floor() as usize).min(sh - 1);
        let sx = ((source(x, w, sw) + 0.5).floor() as usize).min(sw - 1);
        g.get(sy, sx).clone()
    })
}

fn bilinear_at(g: &Image, y: f64, x: f64) -> f64 {
    let (h, w) = g.dims();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    let top = g.get(y0, x0) * (1.0 - fx) + g.get(y0, x1) * fx;
    let bottom = g.get(y1, x0) * (1.0 - fx) + g.get(y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

pub fn resize_bilinear(g: &Image, h: usize, w: usize) -> Image {
    let (sh, sw) = g.dims();
    Image::from_fn(h, w, |y, x| bilinear_at(g, source(y, h, sh), source(x, w, sw)))
}

// Maps an output pixel back into the source for a rotation by `deg`
// about the image centre.
fn inverse_rotation(h: usize, w: usize, deg: f64) -> impl Fn(usize, usize) -> (f64, f64) {
    let (s, c) = deg.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    move |y, x| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        (cy + c * dy - s * dx, cx + s * dy + c * dx)
    }
}

/// Rotation with bilinear sampling; pixels from outside the frame are 0.
pub fn rotate_bilinear(g: &Image, deg: f64) -> Image {
    let (h, w) = g.dims();
    let src = inverse_rotation(h, w, deg);
    Image::from_fn(h, w, |y, x| {
        let (sy, sx) = src(y, x);
        if sy < -0.5 || sx < -0.5 || sy > h as f64 - 0.5 || sx > w as f64 - 0.5 {
            0.0
        } else {
            bilinear_at(g, sy, sx)
        }
    })
}

/// Rotation with nearest sampling; pixels from outside the frame are 0.
pub fn rotate_nearest(g: &Mask, deg: f64) -> Mask {
    let (h, w) = g.dims();
    let src = inverse_rotation(h, w, deg);
    Mask::from_fn(h, w, |y, x| {
        let (sy, sx) = src(y, x);
        g.get_signed(sy.round() as isize, sx.round() as isize).copied().unwrap_or(0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;

    fn sample() -> Sample {
        synth_generate(3, 1, 32).remove(0)
    }

    #[test]
    fn identity_plan_is_a_no_op() {
        let s = sample();
        assert_eq!(apply_plan(&s, &AugmentPlan::identity()), s);
    }

    #[test]
    fn flips_are_involutions() {
        let s = sample();
        assert_eq!(flip_h(&flip_h(&s.image)), s.image);
        assert_eq!(flip_v(&flip_v(&s.mask)), s.mask);
        let plan = AugmentPlan { flip_h: true, ..AugmentPlan::identity() };
        assert_eq!(apply_plan(&apply_plan(&s, &plan), &plan), s);
    }

    #[test]
    fn quarter_turn_preserves_foreground() {
        let s = sample();
        let plan = AugmentPlan { quarter_turns: 1, ..AugmentPlan::identity() };
        let r = apply_plan(&s, &plan);
        assert_eq!(r.mask.count_foreground(), s.mask.count_foreground());
        assert_eq!(rot90(&rot90(&rot90(&rot90(&s.mask)))), s.mask);
        let g = Grid::from_vec(2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(rot90(&g).data(), &[3, 6, 2, 5, 1, 4]);
    }

    #[test]
    fn random_plans_keep_pairing_and_binarity() {
        let s = sample();
        for seed in 0..200 {
            let a = augment(&s, seed);
            assert_eq!(a.image.dims(), a.mask.dims());
            assert_eq!(a.image.dims(), (32, 32));
            assert!(a.mask.is_binary());
            assert!(a.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(augment(&s, 9), augment(&s, 9));
    }

    #[test]
    fn full_crop_is_identity_resize() {
        let s = sample();
        assert_eq!(resize_nearest(&s.mask, 32, 32), s.mask);
        let r = resize_bilinear(&s.image, 32, 32);
        assert!(r.data().iter().zip(s.image.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn zero_angle_rotation_is_identity() {
        let s = sample();
        assert_eq!(rotate_nearest(&s.mask, 0.0), s.mask);
    }
}
