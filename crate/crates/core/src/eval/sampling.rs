use rand_distr::{Distribution, StandardNormal};

use crate::error::{config_err, Result};
use crate::flow::{Features, FlowModel};
use crate::grad::{Real, Tensor, Var};
use crate::rng::stream_rng;
use crate::tomo::Image;
use crate::train::images_tensor;

/// RNG stream for latent draws.
const LATENT_STREAM: u64 = 2;
/// Samples decoded per inverse pass.
pub const DECODE_CHUNK: usize = 50;

fn repeat_features<T: Real>(f: &Features<T>, n: usize) -> Result<Features<T>> {
    Ok(Features {
        levels: f.levels.iter().map(|v| Ok(Var::constant(v.value().repeat_batch(n)?))).collect::<Result<_>>()?,
        vector: Var::constant(f.vector.value().repeat_batch(n)?),
    })
}

fn to_images<T: Real>(x: &Tensor<T>) -> Result<Vec<Image>> {
    let s = x.shape()[2];
    (0..x.batch()).map(|i| Image::from_vec(s, x.item(i).iter().map(|v| v.f64()).collect())).collect()
}

/// Streams posterior samples `F⁻¹(z_j, H(fbp))` with `z_j ~ N(0, I)` drawn in order from
/// `seed`, so the first `k` samples of a longer run equal a run of length `k`.
pub struct PosteriorSampler<'m, T: Real> {
    model: &'m FlowModel<T>,
    features: Features<T>,
    rng: rand_chacha::ChaCha8Rng,
}

impl<'m, T: Real> PosteriorSampler<'m, T> {
    pub fn new(model: &'m FlowModel<T>, fbp: &Image, seed: u64) -> Result<Self> {
        let features = model.features(&images_tensor(&[fbp])?)?;
        Ok(Self { model, features, rng: stream_rng(seed, 0, LATENT_STREAM) })
    }

    /// The next `n` samples.
    pub fn draw(&mut self, n: usize) -> Result<Vec<Image>> {
        let d = self.model.dim();
        let mut out = Vec::with_capacity(n);
        let mut left = n;
        while left > 0 {
            let b = left.min(DECODE_CHUNK);
            let z = Tensor::from_fn(&[b, d], |_| T::of(StandardNormal.sample(&mut self.rng)));
            let x = self.model.decode_with(&z, &repeat_features(&self.features, b)?)?;
            out.extend(to_images(&x)?);
            left -= b;
        }
        Ok(out)
    }
}

pub fn sample_posterior<T: Real>(model: &FlowModel<T>, fbp: &Image, n: usize, seed: u64) -> Result<Vec<Image>> {
    if n == 0 {
        return Err(config_err!("number of posterior samples must be >= 1"));
    }
    PosteriorSampler::new(model, fbp, seed)?.draw(n)
}

/// Running pixel-wise sums for mean and standard deviation.
#[derive(Clone, Debug)]
pub struct MomentAccumulator {
    size: usize,
    count: usize,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(size: usize) -> Self {
        Self { size, count: 0, sum: vec![0.0; size * size], sum_sq: vec![0.0; size * size] }
    }

    pub fn push(&mut self, img: &Image) {
        for ((s, q), &v) in self.sum.iter_mut().zip(&mut self.sum_sq).zip(img.data()) {
            *s += v;
            *q += v * v;
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Image {
        let n = self.count.max(1) as f64;
        Image::from_vec(self.size, self.sum.iter().map(|s| s / n).collect()).expect("size")
    }

    /// Population standard deviation (divides by `n`), so a single sample gives 0.
    pub fn std(&self) -> Image {
        let n = self.count.max(1) as f64;
        let data = self.sum.iter().zip(&self.sum_sq).map(|(s, q)| (q / n - (s / n).powi(2)).max(0.0).sqrt()).collect();
        Image::from_vec(self.size, data).expect("size")
    }
}

/// Pixel-wise mean and standard deviation of `n` posterior samples.
pub fn conditional_mean<T: Real>(model: &FlowModel<T>, fbp: &Image, n: usize, seed: u64) -> Result<(Image, Image)> {
    let samples = sample_posterior(model, fbp, n, seed)?;
    let mut acc = MomentAccumulator::new(fbp.size());
    samples.iter().for_each(|s| acc.push(s));
    Ok((acc.mean(), acc.std()))
}
