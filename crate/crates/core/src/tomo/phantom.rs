//! Procedural phantoms on the unit disk `[-1, 1]²`, rasterized with 4×4 supersampling.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{config_err, Error, Result};
use crate::rng::stream_rng;

const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomFamily {
    /// 3–8 random additive ellipses.
    Ellipses,
    /// Modified Shepp–Logan head phantom.
    Shepp,
}

impl FromStr for PhantomFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ellipses" => Ok(Self::Ellipses),
            "shepp" => Ok(Self::Shepp),
            other => Err(config_err!("unknown phantom family {other:?} (expected \"ellipses\" or \"shepp\")")),
        }
    }
}

impl PhantomFamily {
    pub fn id(self) -> &'static str {
        match self {
            Self::Ellipses => "ellipses",
            Self::Shepp => "shepp",
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Ellipse {
    value: f64,
    a: f64,
    b: f64,
    x0: f64,
    y0: f64,
    /// Rotation in radians.
    theta: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = (dx * c + dy * s) / self.a;
        let v = (-dx * s + dy * c) / self.b;
        u * u + v * v <= 1.0
    }
}

// (value, a, b, x0, y0, theta in degrees)
const SHEPP_LOGAN: [(f64, f64, f64, f64, f64, f64); 10] = [
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

fn shepp_logan() -> Vec<Ellipse> {
    SHEPP_LOGAN
        .iter()
        .map(|&(value, a, b, x0, y0, deg)| Ellipse { value, a, b, x0, y0, theta: deg.to_radians() })
        .collect()
}

fn random_ellipses(seed: u64) -> Vec<Ellipse> {
    let mut rng = stream_rng(seed, 0, 0);
    let count = rng.random_range(3..=8);
    let mut out = Vec::with_capacity(count);
    // a large body first so the interior structures sit on a background
    out.push(Ellipse {
        value: rng.random_range(0.25..0.5),
        a: rng.random_range(0.6..0.9),
        b: rng.random_range(0.5..0.8),
        x0: rng.random_range(-0.05..0.05),
        y0: rng.random_range(-0.05..0.05),
        theta: rng.random_range(0.0..PI),
    });
    for _ in 1..count {
        let r = rng.random_range(0.0..0.55);
        let phi = rng.random_range(0.0..2.0 * PI);
        out.push(Ellipse {
            value: rng.random_range(-0.25..0.5),
            a: rng.random_range(0.05..0.35),
            b: rng.random_range(0.05..0.35),
            x0: r * phi.cos(),
            y0: r * phi.sin(),
            theta: rng.random_range(0.0..PI),
        });
    }
    out
}

fn rasterize(size: usize, ellipses: &[Ellipse]) -> Image {
    let mut img = Image::zeros(size);
    let half = size as f64 / 2.0;
    let sub = 1.0 / SUPERSAMPLE as f64;
    for r in 0..size {
        for c in 0..size {
            let mut acc = 0.0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let x = (c as f64 + (sx as f64 + 0.5) * sub - half) / half;
                    let y = (half - r as f64 - (sy as f64 + 0.5) * sub) / half;
                    acc += ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.value).sum::<f64>();
                }
            }
            img.data_mut()[r * size + c] = (acc * sub * sub).clamp(0.0, 1.0);
        }
    }
    apply_circle_mask(&mut img);
    img
}

/// Zero every pixel whose center lies outside the inscribed circle.
pub fn apply_circle_mask(img: &mut Image) {
    let n = img.size();
    let c = (n as f64 - 1.0) / 2.0;
    let r2 = (n as f64 / 2.0).powi(2);
    for row in 0..n {
        for col in 0..n {
            let (dx, dy) = (col as f64 - c, row as f64 - c);
            if dx * dx + dy * dy > r2 {
                img.data_mut()[row * n + col] = 0.0;
            }
        }
    }
}

/// Deterministic phantom for `seed`. Values lie in `[0, 1]` and vanish outside the
/// inscribed circle.
pub fn generate_phantom(seed: u64, size: usize, family: PhantomFamily) -> Result<Image> {
    if size < 16 {
        return Err(config_err!("phantom size must be at least 16, got {size}"));
    }
    let ellipses = match family {
        PhantomFamily::Ellipses => random_ellipses(seed),
        PhantomFamily::Shepp => shepp_logan(),
    };
    Ok(rasterize(size, &ellipses))
}

/// Centered disc of unit value and radius `radius` pixels, area-antialiased.
pub fn disc(size: usize, radius: f64) -> Image {
    let half = size as f64 / 2.0;
    let r = radius / half;
    rasterize(size, &[Ellipse { value: 1.0, a: r, b: r, x0: 0.0, y0: 0.0, theta: 0.0 }])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = generate_phantom(11, 32, PhantomFamily::Ellipses).unwrap();
        let b = generate_phantom(11, 32, PhantomFamily::Ellipses).unwrap();
        let c = generate_phantom(12, 32, PhantomFamily::Ellipses).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn values_clipped_and_masked() {
        for seed in 0..20 {
            let img = generate_phantom(seed, 32, PhantomFamily::Ellipses).unwrap();
            assert!(img.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(img.data().iter().any(|&v| v > 0.0));
            assert_eq!(img.get(0, 0), 0.0);
            assert_eq!(img.get(31, 31), 0.0);
            assert_eq!(img.get(0, 31), 0.0);
        }
        let s = generate_phantom(0, 64, PhantomFamily::Shepp).unwrap();
        assert!(s.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!((s.get(32, 32) - 0.2).abs() < 0.05);
    }

    #[test]
    fn unknown_family_is_config_error() {
        assert!("ellipses".parse::<PhantomFamily>().is_ok());
        assert!(matches!("blobs".parse::<PhantomFamily>(), Err(Error::Config(_))));
        assert!(generate_phantom(0, 8, PhantomFamily::Shepp).is_err());
    }

    #[test]
    fn disc_area_matches() {
        let d = disc(64, 20.0);
        let area: f64 = d.data().iter().sum();
        assert!((area - PI * 400.0).abs() / (PI * 400.0) < 2e-3);
    }
}
