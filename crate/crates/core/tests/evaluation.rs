//! Metrics against direct re-derivations, and statistics of the posterior sampler.

mod common;

use common::rng;
use ctflow::eval::{evaluate, psnr, sample_posterior, ssim, MomentAccumulator, Method, REPORT_HEADER};
use ctflow::flow::ArchConfig;
use ctflow::tomo::{Dataset, DatasetConfig, Image};
use ctflow::train::init_identity;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

const METRIC_TOL: f64 = 1e-10;

fn random_image(r: &mut impl Rng, n: usize, scale: f64, offset: f64) -> Image {
    Image::from_vec(n, (0..n * n).map(|_| offset + scale * r.sample::<f64, _>(StandardNormal)).collect()).unwrap()
}

/// Two-pass SSIM over valid 7x7 windows with centered sample moments.
fn ssim_oracle(x: &Image, y: &Image, range: f64) -> f64 {
    let n = x.size();
    let w = 7;
    let (c1, c2) = ((0.01 * range).powi(2), (0.03 * range).powi(2));
    let mut acc = Vec::new();
    for r in 0..=n - w {
        for c in 0..=n - w {
            let px: Vec<f64> = (0..w * w).map(|k| x.get(r + k / w, c + k % w)).collect();
            let py: Vec<f64> = (0..w * w).map(|k| y.get(r + k / w, c + k % w)).collect();
            let m = (w * w) as f64;
            let mx = px.iter().sum::<f64>() / m;
            let my = py.iter().sum::<f64>() / m;
            let vx = px.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (m - 1.0);
            let vy = py.iter().map(|a| (a - my).powi(2)).sum::<f64>() / (m - 1.0);
            let cxy = px.iter().zip(&py).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (m - 1.0);
            acc.push(((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)));
        }
    }
    acc.iter().sum::<f64>() / acc.len() as f64
}

fn psnr_oracle(x: &Image, y: &Image, range: f64) -> f64 {
    let se: f64 = x.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    20.0 * range.log10() - 10.0 * (se / x.data().len() as f64).log10()
}

#[test]
fn metrics_match_direct_formulas() {
    let mut r = rng(70);
    for k in 0..100 {
        let n = 7 + k % 20;
        let range = [1.0, 0.5, 2.0][k % 3];
        let truth = random_image(&mut r, n, 0.3, 0.5);
        let noisy = Image::from_vec(n, truth.data().iter().map(|v| v + 0.05 * r.sample::<f64, _>(StandardNormal)).collect())
            .unwrap();
        let (p, q) = (psnr(&noisy, &truth, range).unwrap(), psnr_oracle(&noisy, &truth, range));
        assert!((p - q).abs() < METRIC_TOL * q.abs().max(1.0), "psnr {p} vs {q}");
        let (s, t) = (ssim(&noisy, &truth, range).unwrap(), ssim_oracle(&noisy, &truth, range));
        assert!((s - t).abs() < METRIC_TOL, "ssim {s} vs {t}");
    }
}

#[test]
fn metric_edge_cases() {
    let mut r = rng(71);
    let a = random_image(&mut r, 16, 1.0, 0.0);
    assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
    assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
    let small = random_image(&mut r, 6, 1.0, 0.0);
    assert!(ssim(&small, &small, 1.0).is_err());
    assert!(psnr(&a, &small, 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ssim_is_symmetric_and_bounded(seed in any::<u64>(), n in 7usize..14, noise in 0.0f64..1.0) {
        let mut r = rng(seed);
        let a = random_image(&mut r, n, 0.3, 0.5);
        let b = Image::from_vec(n, a.data().iter().map(|v| v + noise * r.sample::<f64, _>(StandardNormal)).collect()).unwrap();
        let s = ssim(&a, &b, 1.0).unwrap();
        prop_assert!((s - ssim(&b, &a, 1.0).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
    }

    #[test]
    fn psnr_drops_by_20db_per_decade_of_error(seed in any::<u64>(), e in 1e-3f64..1e-1) {
        let mut r = rng(seed);
        let a = random_image(&mut r, 8, 1.0, 0.0);
        let d = random_image(&mut r, 8, 1.0, 0.0);
        let shifted = |s: f64| Image::from_vec(8, a.data().iter().zip(d.data()).map(|(x, y)| x + s * y).collect()).unwrap();
        let p1 = psnr(&shifted(e), &a, 1.0).unwrap();
        let p10 = psnr(&shifted(10.0 * e), &a, 1.0).unwrap();
        prop_assert!((p1 - p10 - 20.0).abs() < 1e-9);
    }

    #[test]
    fn accumulator_matches_two_pass_moments(seed in any::<u64>(), count in 1usize..12) {
        let mut r = rng(seed);
        let imgs: Vec<Image> = (0..count).map(|_| random_image(&mut r, 4, 1.0, 3.0)).collect();
        let mut acc = MomentAccumulator::new(4);
        imgs.iter().for_each(|i| acc.push(i));
        for p in 0..16 {
            let vals: Vec<f64> = imgs.iter().map(|i| i.data()[p]).collect();
            let m = vals.iter().sum::<f64>() / count as f64;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / count as f64).sqrt();
            prop_assert!((acc.mean().data()[p] - m).abs() < 1e-12);
            prop_assert!((acc.std().data()[p] - sd).abs() < 1e-6);
        }
    }
}

fn fbp_input(n: usize) -> Image {
    random_image(&mut rng(72), n, 0.2, 0.3)
}

#[test]
fn samples_are_seeded_and_prefix_stable() {
    let model = init_identity::<f64>(ArchConfig::miniature(), 1).unwrap();
    let fbp = fbp_input(8);
    let long = sample_posterior(&model, &fbp, 120, 5).unwrap();
    assert_eq!(long[..7], sample_posterior(&model, &fbp, 7, 5).unwrap()[..]);
    assert_eq!(long, sample_posterior(&model, &fbp, 120, 5).unwrap());
    assert_ne!(long[0], sample_posterior(&model, &fbp, 1, 6).unwrap()[0]);
    assert!(sample_posterior(&model, &fbp, 0, 5).is_err());
}

#[test]
fn fresh_model_posterior_is_standard_normal() {
    let model = init_identity::<f64>(ArchConfig::miniature(), 2).unwrap();
    let fbp = fbp_input(8);
    let rms_of_mean = |n: usize| {
        let mut acc = MomentAccumulator::new(8);
        sample_posterior(&model, &fbp, n, 9).unwrap().iter().for_each(|s| acc.push(s));
        let m = acc.mean();
        let sd = acc.std();
        let mean_sd = sd.data().iter().sum::<f64>() / 64.0;
        ((m.data().iter().map(|v| v * v).sum::<f64>() / 64.0).sqrt(), mean_sd)
    };
    let (rms10, _) = rms_of_mean(10);
    let (rms1000, sd1000) = rms_of_mean(1000);
    let expected = (1.0f64 / 1000.0).sqrt();
    assert!((rms1000 - expected).abs() < 0.3 * expected, "rms of mean {rms1000}, expected {expected}");
    assert!(rms1000 < rms10 / 3.0, "{rms10} -> {rms1000}");
    assert!((sd1000 - 1.0).abs() < 0.05, "pixel std {sd1000}");
}

#[test]
fn report_covers_every_image_and_sample_count() {
    let cfg = DatasetConfig { count: 2, seed: 3, geometry: ctflow::Geometry::new(8, 25, 1.0 / 16.0, 16, 1.0 / 16.0).unwrap(), ..Default::default() };
    let data = Dataset { header: cfg.header(), pairs: (0..2).map(|i| ctflow::tomo::build_pair(&cfg, i).unwrap()).collect() };
    let model = init_identity::<f32>(ArchConfig { image_size: 16, ..ArchConfig::miniature() }, 0).unwrap();
    let mut seen = Vec::new();
    let report = evaluate(&model, &data, &[10, 1, 10], 4, 1.0, |i| seen.push(i)).unwrap();
    assert_eq!(seen, vec![0, 1]);
    assert_eq!(report.rows.len(), 2 * 3);
    let csv = report.to_csv();
    assert_eq!(csv.lines().next(), Some(REPORT_HEADER));
    assert_eq!(csv.lines().count(), 7);
    let fbp = report.aggregate(Method::Fbp, 0).unwrap();
    assert_eq!(fbp.count, 2);
    assert!(report.aggregate(Method::Cinn, 10).is_some());
    assert!(evaluate(&model, &data, &[], 4, 1.0, |_| {}).unwrap_err().is_config());
    let again = evaluate(&model, &data, &[1, 10], 4, 1.0, |_| {}).unwrap();
    assert_eq!(again.to_csv(), csv);
}
