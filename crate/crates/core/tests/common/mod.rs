#![allow(dead_code)]

use ctflow::grad::{ParamStore, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| scale * rng.sample::<f64, _>(StandardNormal))
}

/// Perturb every trainable parameter so couplings are far from the identity.
pub fn perturb(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    for p in store.iter_mut().filter(|p| p.trainable) {
        for v in p.tensor.data_mut() {
            *v += scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

/// `log|det J|` of `f: R^d -> R^d` at `x` with the Jacobian assembled column by column
/// from central differences.
pub fn fd_logdet(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> f64 {
    let d = x.len();
    let mut j = nalgebra::DMatrix::<f64>::zeros(d, d);
    let mut xp = x.to_vec();
    for col in 0..d {
        xp[col] = x[col] + h;
        let fp = f(&xp);
        xp[col] = x[col] - h;
        let fm = f(&xp);
        xp[col] = x[col];
        assert_eq!(fp.len(), d, "map is not square");
        for row in 0..d {
            j[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
        }
    }
    let lu = j.lu();
    let det = lu.determinant();
    det.abs().ln()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}
