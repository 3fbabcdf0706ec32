use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DownsampleKind {
    /// Orthonormal 2×2 Haar transform.
    Haar,
    /// Pixel-shuffle rearrangement.
    Irevnet,
}

/// Multi-scale conditional flow architecture.
///
/// The flow has `levels` convolutional resolution levels followed by one dense level.
/// Level `l` (1-based) is entered through a downsample section (2× downsample, then twice
/// a 1×1 convolution and an unconditional coupling), after which `split[l-1]` channels
/// leave for the latent vector. Each conv level holds `couplings_per_level` conditional
/// couplings alternating 1×1 and 3×3 subnetworks, each followed by a 1×1 convolution.
/// Before the dense level `final_split` channels leave; the rest is flattened and passed
/// through `dense_couplings` pairs of (fixed random permutation, dense coupling).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub image_size: usize,
    pub levels: usize,
    pub couplings_per_level: usize,
    pub downsample: Vec<DownsampleKind>,
    pub split: Vec<usize>,
    pub final_split: usize,
    /// Hidden width of the coupling subnetworks, per level.
    pub subnet_hidden: Vec<usize>,
    pub downsample_hidden: usize,
    pub dense_hidden: usize,
    pub dense_couplings: usize,
    /// Soft-clamp amplitude of coupling log-scales.
    pub clamp: f64,
    /// Conditioning feature channels handed to each conv level.
    pub cond_channels: Vec<usize>,
    /// Internal width of each conditioning stage.
    pub cond_hidden: Vec<usize>,
    /// Length of the conditioning vector for the dense level.
    pub cond_vector: usize,
}

impl Default for ArchConfig {
    /// Desk-scale model for 64×64 images.
    fn default() -> Self {
        use DownsampleKind::*;
        Self {
            image_size: 64,
            levels: 5,
            couplings_per_level: 4,
            downsample: vec![Irevnet, Irevnet, Irevnet, Irevnet, Haar],
            split: vec![0, 8, 16, 32, 96],
            final_split: 28,
            subnet_hidden: vec![16, 24, 32, 32, 32],
            downsample_hidden: 16,
            dense_hidden: 64,
            dense_couplings: 4,
            clamp: 1.5,
            cond_channels: vec![4, 8, 16, 32, 32],
            cond_hidden: vec![8, 16, 32, 32, 48],
            cond_vector: 64,
        }
    }
}

impl ArchConfig {
    /// Layer sizes of the published 352×352 model.
    pub fn full_scale() -> Self {
        use DownsampleKind::*;
        Self {
            image_size: 352,
            levels: 5,
            couplings_per_level: 6,
            downsample: vec![Irevnet, Irevnet, Irevnet, Irevnet, Haar],
            split: vec![0, 8, 16, 32, 96],
            final_split: 28,
            subnet_hidden: vec![64; 5],
            downsample_hidden: 64,
            dense_hidden: 512,
            dense_couplings: 4,
            clamp: 1.5,
            cond_channels: vec![4, 8, 16, 32, 32],
            cond_hidden: vec![64, 32, 64, 64, 128],
            cond_vector: 256,
        }
    }

    /// 8×8 model (64 latent dimensions) with every block type, for exact Jacobian checks.
    pub fn miniature() -> Self {
        use DownsampleKind::*;
        Self {
            image_size: 8,
            levels: 2,
            couplings_per_level: 2,
            downsample: vec![Irevnet, Haar],
            split: vec![0, 8],
            final_split: 6,
            subnet_hidden: vec![6, 6],
            downsample_hidden: 6,
            dense_hidden: 8,
            dense_couplings: 2,
            clamp: 1.5,
            cond_channels: vec![3, 4],
            cond_hidden: vec![4, 5],
            cond_vector: 6,
        }
    }

    /// Channel count and side length at each conv level.
    pub fn level_shapes(&self) -> Vec<(usize, usize)> {
        let mut c = 1;
        let mut s = self.image_size;
        let mut out = Vec::with_capacity(self.levels);
        for l in 0..self.levels {
            c = c * 4 - self.split[l];
            s /= 2;
            out.push((c, s));
        }
        out
    }

    /// Dimension entering the dense level.
    pub fn dense_dim(&self) -> usize {
        let (c, s) = *self.level_shapes().last().expect("at least one level");
        (c - self.final_split) * s * s
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.levels;
        if l == 0 {
            return Err(config_err!("arch: levels must be >= 1"));
        }
        for (name, len) in [
            ("downsample", self.downsample.len()),
            ("split", self.split.len()),
            ("subnet_hidden", self.subnet_hidden.len()),
            ("cond_channels", self.cond_channels.len()),
            ("cond_hidden", self.cond_hidden.len()),
        ] {
            if len != l {
                return Err(config_err!("arch: {name} has {len} entries, expected one per level ({l})"));
            }
        }
        if self.image_size == 0 || !self.image_size.is_multiple_of(1 << l) {
            return Err(config_err!(
                "arch: image_size {} is not divisible by 2^{l}; the conditioning stages need {l} stride-2 halvings",
                self.image_size
            ));
        }
        if self.couplings_per_level == 0 || !self.couplings_per_level.is_multiple_of(2) {
            return Err(config_err!("arch: couplings_per_level must be a positive even number"));
        }
        if !(self.clamp > 0.0 && self.clamp.is_finite()) {
            return Err(config_err!("arch: clamp must be positive"));
        }
        let mut c = 1usize;
        for lvl in 0..l {
            c *= 4;
            if self.split[lvl] >= c.saturating_sub(1) {
                return Err(config_err!("arch: split {} at level {} leaves fewer than 2 of {c} channels", self.split[lvl], lvl + 1));
            }
            c -= self.split[lvl];
        }
        if self.final_split >= c {
            return Err(config_err!("arch: final_split {} must leave channels out of {c}", self.final_split));
        }
        if self.dense_dim() < 2 {
            return Err(config_err!("arch: the dense level needs at least 2 dimensions"));
        }
        let widths = self
            .subnet_hidden
            .iter()
            .chain(&self.cond_channels)
            .chain(&self.cond_hidden)
            .chain([&self.downsample_hidden, &self.dense_hidden, &self.cond_vector]);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(config_err!("arch: all widths must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("arch config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err!("arch config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for a in [ArchConfig::default(), ArchConfig::full_scale(), ArchConfig::miniature()] {
            a.validate().unwrap();
        }
    }

    #[test]
    fn full_scale_matches_published_shapes() {
        let a = ArchConfig::full_scale();
        assert_eq!(a.level_shapes(), vec![(4, 176), (8, 88), (16, 44), (32, 22), (32, 11)]);
        assert_eq!(a.dense_dim(), 484);
    }

    #[test]
    fn desk_shapes() {
        let a = ArchConfig::default();
        assert_eq!(a.level_shapes(), vec![(4, 32), (8, 16), (16, 8), (32, 4), (32, 2)]);
        assert_eq!(a.dense_dim(), 16);
    }

    #[test]
    fn bad_sizes_rejected() {
        let mut a = ArchConfig::default();
        a.image_size = 48;
        assert!(a.validate().is_err());
        let mut a = ArchConfig::default();
        a.split.pop();
        assert!(a.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let a = ArchConfig::miniature();
        assert_eq!(ArchConfig::from_toml(&a.to_toml()).unwrap(), a);
        assert!(ArchConfig::from_toml("levels = 2\nbogus = 1").is_err());
    }
}
