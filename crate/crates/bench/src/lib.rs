//! Inputs shared by the benchmarks.

use ctflow::grad::{Real, Tensor};
use ctflow::tomo::{generate_phantom, Image, PhantomFamily};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn phantom(size: usize) -> Image {
    generate_phantom(1, size, PhantomFamily::Ellipses).expect("phantom")
}

pub fn uniform<T: Real>(shape: &[usize], seed: u64) -> Tensor<T> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| T::of(r.random_range(-1.0..1.0)))
}

/// Batch of `n` copies of a phantom in NCHW layout.
pub fn image_batch<T: Real>(n: usize, size: usize) -> Tensor<T> {
    let p = phantom(size);
    Tensor::from_fn(&[n, 1, size, size], |i| T::of(p.data()[i % (size * size)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(image_batch::<f32>(3, 16).shape(), &[3, 1, 16, 16]);
        assert_eq!(uniform::<f64>(&[2, 5], 0).len(), 10);
    }
}
