//! Ray-driven parallel-beam projector and its exact transpose.
//!
//! Each ray is sampled at midpoints of a uniform partition of `[-T, T]` with step at most
//! half a pixel, and the image is read with bilinear interpolation (zero outside the
//! grid). [`back_project`] visits exactly the same `(pixel, weight)` pairs and scatters,
//! so it is the matrix transpose of [`radon_forward`] up to floating-point summation order.

use super::{Geometry, Image, Sinogram};
use crate::error::Result;

struct RayPlan {
    half_len: f64,
    step: f64,
    steps: usize,
    /// Half-width of the box outside which bilinear weights vanish.
    support: f64,
    /// Pixel-center index of the origin.
    center: f64,
    inv_ps: f64,
    n: usize,
}

impl RayPlan {
    fn new(geom: &Geometry) -> Self {
        let ps = geom.pixel_spacing;
        let n = geom.image_size;
        let half_len = 0.5 * geom.image_diagonal() + ps;
        let steps = (2.0 * half_len / (0.5 * ps)).ceil() as usize;
        Self {
            half_len,
            step: 2.0 * half_len / steps as f64,
            steps,
            support: 0.5 * (n as f64 + 1.0) * ps,
            center: (n as f64 - 1.0) / 2.0,
            inv_ps: 1.0 / ps,
            n,
        }
    }

    /// Calls `f(pixel_index, weight)` for every interpolation weight along ray `(s, phi)`,
    /// already multiplied by the step length.
    #[inline]
    fn visit(&self, s: f64, cos: f64, sin: f64, mut f: impl FnMut(usize, f64)) {
        // point(t) = s·(cos, sin) + t·(−sin, cos); clip t to the support box
        let (px, py, dx, dy) = (s * cos, s * sin, -sin, cos);
        let mut lo = -self.half_len;
        let mut hi = self.half_len;
        for (p, d) in [(px, dx), (py, dy)] {
            if d.abs() < 1e-12 {
                if p.abs() >= self.support {
                    return;
                }
            } else {
                let a = (-self.support - p) / d;
                let b = (self.support - p) / d;
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
        }
        if lo >= hi {
            return;
        }
        let m_lo = (((lo + self.half_len) / self.step - 0.5).ceil().max(0.0)) as usize;
        let m_hi = (((hi + self.half_len) / self.step - 0.5).floor()).min(self.steps as f64 - 1.0);
        if m_hi < 0.0 {
            return;
        }
        let n = self.n as isize;
        for m in m_lo..=m_hi as usize {
            let t = -self.half_len + (m as f64 + 0.5) * self.step;
            let col = (px + t * dx) * self.inv_ps + self.center;
            let row = self.center - (py + t * dy) * self.inv_ps;
            let (c0, r0) = (col.floor(), row.floor());
            let (fc, fr) = (col - c0, row - r0);
            let (c0, r0) = (c0 as isize, r0 as isize);
            let w = [
                (r0, c0, (1.0 - fr) * (1.0 - fc)),
                (r0, c0 + 1, (1.0 - fr) * fc),
                (r0 + 1, c0, fr * (1.0 - fc)),
                (r0 + 1, c0 + 1, fr * fc),
            ];
            for (r, c, wt) in w {
                if r >= 0 && r < n && c >= 0 && c < n {
                    f((r * n + c) as usize, wt * self.step);
                }
            }
        }
    }
}

/// Discrete Radon transform: line integrals of `image` for every `(angle, offset)` pair.
pub fn radon_forward(image: &Image, geom: &Geometry) -> Result<Sinogram> {
    geom.check_image(image.size())?;
    let plan = RayPlan::new(geom);
    let mut sino = Sinogram::zeros(geom.num_angles, geom.num_detectors);
    let px = image.data();
    for k in 0..geom.num_angles {
        let (sin, cos) = geom.angle(k).sin_cos();
        for j in 0..geom.num_detectors {
            let mut acc = 0.0;
            plan.visit(geom.detector_offset(j), cos, sin, |p, w| acc += w * px[p]);
            sino.data_mut()[k * geom.num_detectors + j] = acc;
        }
    }
    Ok(sino)
}

/// Transpose of [`radon_forward`].
pub fn back_project(sino: &Sinogram, geom: &Geometry) -> Result<Image> {
    geom.check_sinogram(sino.num_angles(), sino.num_detectors())?;
    let plan = RayPlan::new(geom);
    let mut image = Image::zeros(geom.image_size);
    let out = image.data_mut();
    for k in 0..geom.num_angles {
        let (sin, cos) = geom.angle(k).sin_cos();
        for j in 0..geom.num_detectors {
            let y = sino.get(k, j);
            if y == 0.0 {
                continue;
            }
            plan.visit(geom.detector_offset(j), cos, sin, |p, w| out[p] += w * y);
        }
    }
    Ok(image)
}
