use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{radon_forward, Geometry, Image, Sinogram};
use crate::error::{config_err, Error, Result};

/// Poisson photon-count noise on post-log line integrals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Mean unattenuated photons per detector bin; `f64::INFINITY` means noiseless.
    pub photon_count: f64,
    /// Counts are clamped to at least this before taking the log.
    pub clamp_floor: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(photon_count: f64, seed: u64) -> Self {
        Self { photon_count, clamp_floor: 0.1, seed }
    }

    pub fn noiseless() -> Self {
        Self::new(f64::INFINITY, 0)
    }

    pub fn is_noiseless(&self) -> bool {
        self.photon_count == f64::INFINITY
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.photon_count > 0.0) {
            return Err(config_err!("photon count must be positive, got {}", self.photon_count));
        }
        if !(self.clamp_floor > 0.0 && self.clamp_floor <= 1.0) {
            return Err(config_err!("clamp floor must lie in (0, 1], got {}", self.clamp_floor));
        }
        Ok(())
    }
}

/// Replace each clean line integral `ȳ` by `−ln(max(N, floor)/N0)`, `N ~ Poisson(N0·e^{−ȳ})`.
/// Bins are drawn in row-major order from a generator seeded by `noise.seed`.
pub fn apply_poisson_noise(clean: &Sinogram, noise: &NoiseModel) -> Result<Sinogram> {
    noise.validate()?;
    if !clean.is_finite() {
        return Err(Error::NonFinite("clean sinogram contains NaN or Inf".into()));
    }
    if noise.is_noiseless() {
        return Ok(clean.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let n0 = noise.photon_count;
    let mut out = clean.clone();
    for y in out.data_mut() {
        let lambda = n0 * (-*y).exp();
        let counts = if lambda > 0.0 && lambda.is_finite() {
            Poisson::new(lambda).map_err(|e| Error::Contract(format!("poisson rate {lambda}: {e}")))?.sample(&mut rng)
        } else {
            0.0
        };
        *y = -(counts.max(noise.clamp_floor) / n0).ln();
    }
    Ok(out)
}

/// Forward-project `image` and apply [`apply_poisson_noise`].
pub fn simulate_low_dose(image: &Image, geom: &Geometry, noise: &NoiseModel) -> Result<Sinogram> {
    if !image.is_finite() {
        return Err(Error::NonFinite("image contains NaN or Inf".into()));
    }
    let clean = radon_forward(image, geom)?;
    apply_poisson_noise(&clean, noise)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_is_exact() {
        let g = Geometry::square(16, 8).unwrap();
        let img = crate::tomo::phantom::disc(16, 5.0);
        let clean = radon_forward(&img, &g).unwrap();
        assert_eq!(simulate_low_dose(&img, &g, &NoiseModel::noiseless()).unwrap(), clean);
    }

    #[test]
    fn same_seed_same_noise() {
        let s = Sinogram::from_vec(2, 3, vec![0.5; 6]).unwrap();
        let a = apply_poisson_noise(&s, &NoiseModel::new(1000.0, 9)).unwrap();
        let b = apply_poisson_noise(&s, &NoiseModel::new(1000.0, 9)).unwrap();
        let c = apply_poisson_noise(&s, &NoiseModel::new(1000.0, 10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_counts_are_floored() {
        let s = Sinogram::from_vec(1, 1, vec![60.0]).unwrap();
        let y = apply_poisson_noise(&s, &NoiseModel::new(100.0, 1)).unwrap();
        assert_eq!(y.data()[0], -(0.1f64 / 100.0).ln());
    }

    #[test]
    fn invalid_models_rejected() {
        let s = Sinogram::zeros(1, 1);
        assert!(apply_poisson_noise(&s, &NoiseModel::new(0.0, 1)).is_err());
        let mut m = NoiseModel::new(10.0, 1);
        m.clamp_floor = 1.5;
        assert!(apply_poisson_noise(&s, &m).is_err());
    }
}
