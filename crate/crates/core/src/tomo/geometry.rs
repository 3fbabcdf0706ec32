use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, dim_err, Result};

/// Parallel-beam scan description.
///
/// Angles are `k·π/num_angles`; detector offsets are centered on the rotation axis and
/// spaced `detector_spacing` apart; the image is a centered square grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub num_angles: usize,
    pub num_detectors: usize,
    pub detector_spacing: f64,
    pub image_size: usize,
    pub pixel_spacing: f64,
}

impl Default for Geometry {
    /// Desk scale: 64×64 image spanning unit length, 90 angles, 93 detectors.
    fn default() -> Self {
        let s = 1.0 / 64.0;
        Self { num_angles: 90, num_detectors: 93, detector_spacing: s, image_size: 64, pixel_spacing: s }
    }
}

impl Geometry {
    pub fn new(
        num_angles: usize,
        num_detectors: usize,
        detector_spacing: f64,
        image_size: usize,
        pixel_spacing: f64,
    ) -> Result<Self> {
        let g = Self { num_angles, num_detectors, detector_spacing, image_size, pixel_spacing };
        g.validate()?;
        Ok(g)
    }

    /// Unit spacings with the detector count chosen just large enough to cover the diagonal.
    pub fn square(image_size: usize, num_angles: usize) -> Result<Self> {
        let diag = (image_size as f64 * std::f64::consts::SQRT_2).ceil() as usize;
        let num_detectors = diag + (diag + 1) % 2 + 2;
        Self::new(num_angles, num_detectors, 1.0, image_size, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_angles == 0 || self.num_detectors == 0 || self.image_size == 0 {
            return Err(config_err!("geometry counts must be positive: {self:?}"));
        }
        if !(self.detector_spacing > 0.0 && self.pixel_spacing > 0.0)
            || !self.detector_spacing.is_finite()
            || !self.pixel_spacing.is_finite()
        {
            return Err(config_err!("geometry spacings must be positive and finite: {self:?}"));
        }
        let span = self.num_detectors as f64 * self.detector_spacing;
        if span + 1e-9 < self.image_diagonal() {
            return Err(config_err!(
                "detector span {span} is shorter than the image diagonal {:.3}; projections would be truncated",
                self.image_diagonal()
            ));
        }
        Ok(())
    }

    pub fn image_diagonal(&self) -> f64 {
        self.image_size as f64 * self.pixel_spacing * std::f64::consts::SQRT_2
    }

    pub fn angle(&self, k: usize) -> f64 {
        k as f64 * PI / self.num_angles as f64
    }

    pub fn angles(&self) -> Vec<f64> {
        (0..self.num_angles).map(|k| self.angle(k)).collect()
    }

    pub fn detector_offset(&self, j: usize) -> f64 {
        (j as f64 - (self.num_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }

    pub fn image_len(&self) -> usize {
        self.image_size * self.image_size
    }

    pub fn sinogram_len(&self) -> usize {
        self.num_angles * self.num_detectors
    }

    pub(crate) fn check_image(&self, size: usize) -> Result<()> {
        if size != self.image_size {
            return Err(dim_err!("image is {size}x{size}, geometry expects {0}x{0}", self.image_size));
        }
        Ok(())
    }

    pub(crate) fn check_sinogram(&self, angles: usize, detectors: usize) -> Result<()> {
        if (angles, detectors) != (self.num_angles, self.num_detectors) {
            return Err(dim_err!(
                "sinogram is {angles}x{detectors}, geometry expects {}x{}",
                self.num_angles,
                self.num_detectors
            ));
        }
        Ok(())
    }
}
