use crate::error::{dim_err, Error, Result};
use crate::grad::{Real, Tape, Var};

/// Mean over the batch of `‖z_i‖²/2 − logdet_i`, in nats per sample.
///
/// The constant `(D/2)·log 2π` is omitted; see [`bits_per_dim`].
pub fn nll_loss<T: Real>(tape: &Tape<T>, z: &Var<T>, logdet: &Var<T>) -> Result<Var<T>> {
    let n = z.value().batch();
    if logdet.shape() != [n] {
        return Err(dim_err!("nll_loss: logdet shape {:?} for a batch of {n}", logdet.shape()));
    }
    for i in 0..n {
        if !z.value().item(i).iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("latent of sample {i} in the batch")));
        }
        if !logdet.value().data()[i].is_finite() {
            return Err(Error::NonFinite(format!("log-determinant of sample {i} in the batch")));
        }
    }
    let sq = tape.sum_items(&tape.mul(z, z)?)?;
    let per = tape.sub(&tape.scale(&sq, T::of(0.5))?, logdet)?;
    tape.scale(&tape.sum(&per)?, T::of(1.0 / n as f64))
}

/// Reported loss in bits per dimension, including the Gaussian normalizing constant.
pub fn bits_per_dim(nll: f64, dim: usize) -> f64 {
    let d = dim as f64;
    (nll + 0.5 * d * (2.0 * std::f64::consts::PI).ln()) / (d * std::f64::consts::LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::Tensor;

    fn nll(z: &[f64], zshape: &[usize], ld: &[f64]) -> Result<f64> {
        let tape = Tape::<f64>::inference();
        let z = Var::constant(Tensor::new(zshape, z.to_vec()).unwrap());
        let ld = Var::constant(Tensor::new(&[ld.len()], ld.to_vec()).unwrap());
        Ok(nll_loss(&tape, &z, &ld)?.value().data()[0])
    }

    #[test]
    fn formula() {
        assert_eq!(nll(&[0.0, 0.0], &[1, 2], &[0.0]).unwrap(), 0.0);
        assert_eq!(nll(&[1.0, 1.0], &[1, 2], &[0.5]).unwrap(), 0.5);
        let a = nll(&[1.0, 2.0], &[1, 2], &[0.3]).unwrap();
        let b = nll(&[-3.0, 0.5], &[1, 2], &[-1.0]).unwrap();
        let ab = nll(&[1.0, 2.0, -3.0, 0.5], &[2, 2], &[0.3, -1.0]).unwrap();
        assert!((ab - (a + b) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_names_sample() {
        let e = nll(&[0.0, 0.0, f64::NAN, 0.0], &[2, 2], &[0.0, 0.0]).unwrap_err();
        assert!(e.to_string().contains("sample 1"), "{e}");
    }
}
