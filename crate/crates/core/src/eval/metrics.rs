use crate::error::{dim_err, Result};
use crate::tomo::Image;

/// Side of the uniform SSIM window.
pub const SSIM_WINDOW: usize = 7;

fn check_pair(x: &Image, reference: &Image) -> Result<()> {
    if x.size() != reference.size() {
        return Err(dim_err!("image sizes differ: {} vs {}", x.size(), reference.size()));
    }
    Ok(())
}

pub fn mse(x: &Image, reference: &Image) -> Result<f64> {
    check_pair(x, reference)?;
    let n = x.data().len() as f64;
    Ok(x.data().iter().zip(reference.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

/// `10·log10(range²/MSE)`; `+∞` for identical images.
pub fn psnr(x: &Image, reference: &Image, data_range: f64) -> Result<f64> {
    let m = mse(x, reference)?;
    Ok(if m == 0.0 { f64::INFINITY } else { 10.0 * (data_range * data_range / m).log10() })
}

/// Mean SSIM over all fully contained 7×7 windows (uniform weights, sample covariance),
/// with `C1 = (0.01·range)²` and `C2 = (0.03·range)²`.
pub fn ssim(x: &Image, reference: &Image, data_range: f64) -> Result<f64> {
    check_pair(x, reference)?;
    let n = x.size();
    let w = SSIM_WINDOW;
    if n < w {
        return Err(dim_err!("ssim: image size {n} is smaller than the {w}x{w} window"));
    }
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let np = (w * w) as f64;
    let cov_norm = np / (np - 1.0);
    let (a, b) = (x.data(), reference.data());
    let mut total = 0.0;
    for r in 0..=n - w {
        for c in 0..=n - w {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in r..r + w {
                for j in c..c + w {
                    let (p, q) = (a[i * n + j], b[i * n + j]);
                    sa += p;
                    sb += q;
                    saa += p * p;
                    sbb += q * q;
                    sab += p * q;
                }
            }
            let (ma, mb) = (sa / np, sb / np);
            let va = cov_norm * (saa / np - ma * ma);
            let vb = cov_norm * (sbb / np - mb * mb);
            let cab = cov_norm * (sab / np - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
    }
    let count = ((n - w + 1) * (n - w + 1)) as f64;
    Ok(total / count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(n: usize, f: impl Fn(usize) -> f64) -> Image {
        Image::from_vec(n, (0..n * n).map(f).collect()).unwrap()
    }

    #[test]
    fn psnr_values() {
        let a = img(8, |i| (i % 5) as f64 * 0.1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = img(8, |i| (i % 5) as f64 * 0.1 + 0.1);
        assert!((psnr(&b, &a, 1.0).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_constants() {
        let a = img(16, |i| ((i * 37) % 11) as f64 / 11.0);
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        let (u, v) = (0.2, 0.9);
        let c1 = 0.01f64.powi(2);
        let c2 = 0.03f64.powi(2);
        let expected = (2.0 * u * v + c1) * c2 / ((u * u + v * v + c1) * c2);
        let s = ssim(&img(10, |_| u), &img(10, |_| v), 1.0).unwrap();
        assert!((s - expected).abs() < 1e-12, "{s} vs {expected}");
    }

    #[test]
    fn ssim_small_image_rejected() {
        let a = img(6, |_| 0.0);
        assert!(ssim(&a, &a, 1.0).is_err());
    }
}
