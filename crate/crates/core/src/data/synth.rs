use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Sample;
use crate::{Image, Mask};

pub const NOISE_STD: f64 = 0.02;

/// Faint elliptical Gaussian added to the background.
#[derive(Clone, Debug, PartialEq)]
pub struct Blob {
    pub cy: f64,
    pub cx: f64,
    pub sy: f64,
    pub sx: f64,
    pub amplitude: f64,
}

/// Every random choice behind one synthetic sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Recipe {
    pub size: usize,
    pub cy: f64,
    pub cx: f64,
    /// Mean radius in pixels.
    pub radius: f64,
    pub orientation: f64,
    /// Elongation along the orientation axis.
    pub lobe: f64,
    /// Pinch between the two lobes.
    pub waist: f64,
    /// `(amplitude, phase)` of harmonics 3, 5 and 6.
    pub wobble: [(f64, f64); 3],
    pub foreground: f64,
    pub background: f64,
    pub blur_sigma: f64,
    pub blobs: Vec<Blob>,
    pub gain: f64,
    pub noise_seed: u64,
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

impl Recipe {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Self {
        let s = size as f64;
        let fraction = rng.random_range(0.08..0.3);
        let radius = s * (fraction / PI).sqrt();
        let lobe = rng.random_range(0.2..0.4);
        let waist = rng.random_range(0.05..0.15);
        let wobble = [(); 3].map(|_| (rng.random_range(-0.04..0.04), rng.random_range(0.0..2.0 * PI)));
        let reach = radius * (1.0 + lobe + waist + 0.12);
        let slack = (s / 2.0 - reach).max(0.0) * 0.6;
        let cy = s / 2.0 + rng.random_range(-slack..=slack);
        let cx = s / 2.0 + rng.random_range(-slack..=slack);
        let orientation = rng.random_range(0.0..PI);
        let background = rng.random_range(0.1..0.3);
        let foreground = rng.random_range(0.55..0.8);
        let blur_sigma = rng.random_range(1.0..3.0);
        let contrast = foreground - background;
        let blob_count = rng.random_range(1..=3);
        let blobs = (0..blob_count)
            .map(|_| Blob {
                cy: rng.random_range(0.0..s),
                cx: rng.random_range(0.0..s),
                sy: rng.random_range(0.05..0.2) * s,
                sx: rng.random_range(0.05..0.2) * s,
                amplitude: contrast * rng.random_range(0.2..0.5),
            })
            .collect();
        Recipe {
            size,
            cy,
            cx,
            radius,
            orientation,
            lobe,
            waist,
            wobble,
            foreground,
            background,
            blur_sigma,
            blobs,
            gain: rng.random_range(0.6..1.4),
            noise_seed: rng.random(),
        }
    }

    /// Boundary radius in direction `theta`.
    pub fn boundary(&self, theta: f64) -> f64 {
        let t = theta - self.orientation;
        let mut r = 1.0 + self.lobe * (2.0 * t).cos() - self.waist * (4.0 * t).cos();
        for (&(a, phase), k) in self.wobble.iter().zip([3.0, 5.0, 6.0]) {
            r += a * (k * t + phase).cos();
        }
        self.radius * r
    }

    /// Sharp polygon mask sampled at pixel centres.
    pub fn mask(&self) -> Mask {
        Mask::from_fn(self.size, self.size, |y, x| {
            let (dy, dx) = (y as f64 + 0.5 - self.cy, x as f64 + 0.5 - self.cx);
            u8::from(dy.hypot(dx) <= self.boundary(dy.atan2(dx)))
        })
    }

    /// Noise-free rendering before exposure gain, optionally with the
    /// boundary blur.
    pub fn render(&self, blurred: bool) -> Image {
        let m = self.mask();
        let contrast = self.foreground - self.background;
        let shape = m.map(|&v| f64::from(v) * contrast);
        let shape = if blurred { gaussian_blur(&shape, self.blur_sigma) } else { shape };
        Image::from_fn(self.size, self.size, |y, x| {
            let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
            let haze: f64 = self
                .blobs
                .iter()
                .map(|b| b.amplitude * (-0.5 * (((py - b.cy) / b.sy).powi(2) + ((px - b.cx) / b.sx).powi(2))).exp())
                .sum();
            self.background + shape.get(y, x) + haze
        })
    }

    pub fn sample(&self, id: String) -> Sample {
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        let noise = Normal::new(0.0, NOISE_STD).expect("positive std");
        let image = self.render(true).map(|&v| (self.gain * v + noise.sample(&mut rng)).clamp(0.0, 1.0));
        Sample {
            image,
            mask: self.mask(),
            id,
        }
    }
}

/// Separable Gaussian blur with edge clamping, kernel radius `3σ`.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let r = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-r..=r).map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);
    let (h, w) = img.dims();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let rows = Image::from_fn(h, w, |y, x| {
        kernel.iter().enumerate().map(|(i, k)| k * img.get(y, clamp(x as isize + i as isize - r, w))).sum()
    });
    Image::from_fn(h, w, |y, x| {
        kernel.iter().enumerate().map(|(i, k)| k * rows.get(clamp(y as isize + i as isize - r, h), x)).sum()
    })
}

/// Recipe of sample `index` for `seed`. Each sample has its own random
/// stream, so a sample does not depend on how many others are generated.
pub fn recipe(seed: u64, index: usize, size: usize) -> Recipe {
    Recipe::draw(&mut sample_rng(seed, index as u64), size)
}

/// `count` samples of `size`×`size` pixels with ids `s0000`, `s0001`, ….
pub fn synth_generate(seed: u64, count: usize, size: usize) -> Vec<Sample> {
    (0..count).map(|i| recipe(seed, i, size).sample(format!("s{i:04}"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::components;

    #[test]
    fn deterministic_per_seed() {
        let a = synth_generate(7, 3, 32);
        let b = synth_generate(7, 3, 32);
        assert_eq!(a, b);
        assert_ne!(a[0].image, synth_generate(8, 1, 32)[0].image);
        // Prefix stability.
        assert_eq!(synth_generate(7, 1, 32)[0], a[0]);
    }

    #[test]
    fn values_in_range() {
        for s in synth_generate(1, 5, 64) {
            assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(s.mask.is_binary());
            assert_eq!(s.image.dims(), s.mask.dims());
        }
    }

    #[test]
    fn foreground_fraction_and_components() {
        // Measured over 1000 seeds at the sizes used by the tools.
        for size in [32, 64] {
            for seed in 0..1000 {
                let r = recipe(seed, 0, size);
                let m = r.mask();
                let frac = m.count_foreground() as f64 / (size * size) as f64;
                assert!((0.05..=0.5).contains(&frac), "seed {seed} size {size}: {frac}");
                let (_, sizes) = components(&m);
                assert!(sizes.len() <= 2, "seed {seed}: {} components", sizes.len());
                let largest = *sizes.iter().max().unwrap();
                assert!(largest as f64 >= 0.8 * m.count_foreground() as f64);
            }
        }
    }

    #[test]
    fn blur_softens_the_boundary() {
        for seed in 0..20 {
            let r = recipe(seed, 0, 64);
            let m = r.mask();
            let grad = |img: &Image| {
                let mut total = 0.0;
                let mut count = 0;
                for y in 1..63 {
                    for x in 1..63 {
                        let on_edge = *m.get(y, x) == 1 && [(0, 1), (1, 0), (0, -1), (-1, 0)].iter().any(|&(dy, dx): &(isize, isize)| {
                            *m.get((y as isize + dy) as usize, (x as isize + dx) as usize) == 0
                        });
                        if on_edge {
                            let gx = img.get(y, x + 1) - img.get(y, x - 1);
                            let gy = img.get(y + 1, x) - img.get(y - 1, x);
                            total += gx.hypot(gy);
                            count += 1;
                        }
                    }
                }
                total / count as f64
            };
            assert!(grad(&r.render(true)) < grad(&r.render(false)));
        }
    }
}
