use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{back_project, Geometry, Image, Sinogram};
use crate::error::{Error, Result};

/// Zero-padded FFT length used for filtering `num_detectors` samples.
pub fn filter_len(num_detectors: usize) -> usize {
    (2 * num_detectors).next_power_of_two()
}

/// Ram-Lak (ramp) frequency response `|f|`, with `f` in cycles per unit length, laid out
/// in standard FFT order on a grid of [`filter_len`] bins.
pub fn ram_lak_filter(num_detectors: usize, detector_spacing: f64) -> Result<Vec<f64>> {
    if num_detectors < 2 {
        return Err(Error::Config(format!("ram_lak_filter needs at least 2 detectors, got {num_detectors}")));
    }
    let len = filter_len(num_detectors);
    let df = 1.0 / (len as f64 * detector_spacing);
    Ok((0..len).map(|k| k.min(len - k) as f64 * df).collect())
}

/// Ramp-filter every projection row (linear, not circular, convolution).
pub fn filter_sinogram(sino: &Sinogram, detector_spacing: f64) -> Result<Sinogram> {
    let nd = sino.num_detectors();
    let response = ram_lak_filter(nd, detector_spacing)?;
    let len = response.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut out = Sinogram::zeros(sino.num_angles(), nd);
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    let norm = 1.0 / len as f64;
    for k in 0..sino.num_angles() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(sino.row(k)) {
            b.re = v;
        }
        fwd.process(&mut buf);
        for (b, &h) in buf.iter_mut().zip(&response) {
            *b *= h;
        }
        inv.process(&mut buf);
        for (j, b) in buf.iter().take(nd).enumerate() {
            out.data_mut()[k * nd + j] = b.re * norm;
        }
    }
    Ok(out)
}

/// Filtered back-projection.
///
/// The back-projector is the projector's transpose, which integrates a detector bin over
/// a pixel footprint of area `pixel_spacing²` per `detector_spacing` of offset; the
/// `π/num_angles` angular quadrature weight is rescaled accordingly.
pub fn fbp_reconstruct(sino: &Sinogram, geom: &Geometry) -> Result<Image> {
    geom.check_sinogram(sino.num_angles(), sino.num_detectors())?;
    let filtered = filter_sinogram(sino, geom.detector_spacing)?;
    let mut img = back_project(&filtered, geom)?;
    let scale = PI / geom.num_angles as f64 * geom.detector_spacing / (geom.pixel_spacing * geom.pixel_spacing);
    img.data_mut().iter_mut().for_each(|v| *v *= scale);
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_shape() {
        let h = ram_lak_filter(93, 1.0).unwrap();
        assert_eq!(h.len(), 256);
        assert_eq!(h[0], 0.0);
        for k in 1..h.len() {
            assert_eq!(h[k], h[h.len() - k]);
        }
        let max = h.iter().cloned().fold(0.0, f64::max);
        assert_eq!(h[128], max);
        assert!(ram_lak_filter(1, 1.0).is_err());
    }

    #[test]
    fn zero_sinogram_reconstructs_zero() {
        let g = Geometry::square(16, 10).unwrap();
        let img = fbp_reconstruct(&Sinogram::zeros(10, g.num_detectors), &g).unwrap();
        assert!(img.data().iter().all(|&v| v == 0.0));
    }
}
