use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Architectural hyperparameters of a [`super::GtUNet`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtUNetConfig {
    /// `(H, W)` in pixels.
    pub input_size: [usize; 2],
    pub input_channels: usize,
    /// Number of resolutions, the bottom one included.
    pub levels: usize,
    pub channels_per_level: Vec<usize>,
    pub group_h: usize,
    pub group_w: usize,
    /// Bottleneck channel reduction inside each group Transformer block.
    pub phi: usize,
    pub heads: usize,
    pub output_channels: usize,
}

impl Default for GtUNetConfig {
    fn default() -> Self {
        GtUNetConfig {
            input_size: [256, 256],
            input_channels: 1,
            levels: 4,
            channels_per_level: vec![16, 32, 64, 128],
            group_h: 8,
            group_w: 8,
            phi: 2,
            heads: 4,
            output_channels: 1,
        }
    }
}

impl GtUNetConfig {
    /// Smallest multiple that input heights must be: every level halves the
    /// map and each level must tile into whole groups.
    pub fn required_divisor_h(&self) -> usize {
        (1usize << self.levels.saturating_sub(1)) * self.group_h
    }

    pub fn required_divisor_w(&self) -> usize {
        (1usize << self.levels.saturating_sub(1)) * self.group_w
    }

    /// Checks that an `h`×`w` input is compatible with this architecture.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let (dh, dw) = (self.required_divisor_h(), self.required_divisor_w());
        if h == 0 || w == 0 || h % dh != 0 || w % dw != 0 {
            return Err(Error::Config(format!(
                "input {h}x{w} is incompatible with {} levels of {}x{} groups: height must be a multiple of {dh} and width a multiple of {dw}",
                self.levels, self.group_h, self.group_w
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.levels < 2 {
            return fail(format!("levels must be >= 2, got {}", self.levels));
        }
        if self.channels_per_level.len() != self.levels {
            return fail(format!(
                "channels_per_level has {} entries for {} levels",
                self.channels_per_level.len(),
                self.levels
            ));
        }
        if self.input_channels == 0 || self.output_channels == 0 {
            return fail("input_channels and output_channels must be positive".into());
        }
        if self.group_h == 0 || self.group_w == 0 || self.phi == 0 || self.heads == 0 {
            return fail("group_h, group_w, phi and heads must be positive".into());
        }
        for (level, &c) in self.channels_per_level.iter().enumerate() {
            if c == 0 || c % self.phi != 0 {
                return fail(format!("level {level}: {c} channels not divisible by phi={}", self.phi));
            }
            if (c / self.phi) % self.heads != 0 {
                return fail(format!(
                    "level {level}: bottleneck width {} not divisible by {} heads",
                    c / self.phi,
                    self.heads
                ));
            }
        }
        let [h, w] = self.input_size;
        self.check_input(h, w)
    }

    /// Feature-map extent at `level` for the configured input size.
    pub fn level_size(&self, level: usize) -> (usize, usize) {
        (self.input_size[0] >> level, self.input_size[1] >> level)
    }
}
