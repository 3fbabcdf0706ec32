use crate::error::{dim_err, Result};

/// Square attenuation map, row-major with row 0 at the top (largest `y`).
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    size: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(size: usize) -> Self {
        Self { size, data: vec![0.0; size * size] }
    }

    pub fn from_vec(size: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != size * size {
            return Err(dim_err!("image of size {size} needs {} values, got {}", size * size, data.len()));
        }
        Ok(Self { size, data })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size + col]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Line integrals indexed by `(angle, detector)`, row-major by angle.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    num_angles: usize,
    num_detectors: usize,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(num_angles: usize, num_detectors: usize) -> Self {
        Self { num_angles, num_detectors, data: vec![0.0; num_angles * num_detectors] }
    }

    pub fn from_vec(num_angles: usize, num_detectors: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != num_angles * num_detectors {
            return Err(dim_err!(
                "sinogram {num_angles}x{num_detectors} needs {} values, got {}",
                num_angles * num_detectors,
                data.len()
            ));
        }
        Ok(Self { num_angles, num_detectors, data })
    }

    pub fn num_angles(&self) -> usize {
        self.num_angles
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.num_detectors..(k + 1) * self.num_detectors]
    }

    pub fn get(&self, angle: usize, detector: usize) -> f64 {
        self.data[angle * self.num_detectors + detector]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
