use super::TrainConfig;
use crate::grad::{ParamStore, Real, Tensor};

/// Global L2 norm over all gradients.
pub fn grad_norm<T: Real>(grads: &[Tensor<T>]) -> f64 {
    grads.iter().map(|g| g.norm_sq().f64()).sum::<f64>().sqrt()
}

/// One Adam step (1-based `step`) over the trainable parameters, with decoupled weight
/// decay and global-norm clipping. Returns the gradient norm before clipping.
pub fn adam_step<T: Real>(store: &mut ParamStore<T>, grads: &[Tensor<T>], cfg: &TrainConfig, step: usize) -> f64 {
    assert_eq!(grads.len(), store.len(), "one gradient per parameter");
    assert!(step >= 1, "Adam steps are 1-based");
    let norm = grad_norm(grads);
    let clip = if cfg.grad_clip > 0.0 && norm > cfg.grad_clip { cfg.grad_clip / norm } else { 1.0 };
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let decay = T::of(1.0 - cfg.learning_rate * cfg.weight_decay);
    let (tb1, tb2, tclip) = (T::of(b1), T::of(b2), T::of(clip));
    let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.eps));
    let (tc1, tc2) = (T::of(c1), T::of(c2));
    for (p, g) in store.iter_mut().zip(grads) {
        if !p.trainable {
            continue;
        }
        let (theta, m, v) = (p.tensor.data_mut(), p.m.data_mut(), p.v.data_mut());
        for i in 0..theta.len() {
            let gi = g.data()[i] * tclip;
            m[i] = tb1 * m[i] + (T::one() - tb1) * gi;
            v[i] = tb2 * v[i] + (T::one() - tb2) * gi * gi;
            let mhat = m[i] / tc1;
            let vhat = v[i] / tc2;
            theta[i] = theta[i] * decay - lr * mhat / (vhat.sqrt() + eps);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("w", Tensor::new(&[values.len()], values.to_vec()).unwrap(), true).unwrap();
        s
    }

    #[test]
    fn zero_gradient_is_pure_decay() {
        let mut s = store(&[2.0, -4.0]);
        let cfg = TrainConfig { learning_rate: 0.1, weight_decay: 0.01, ..Default::default() };
        adam_step(&mut s, &[Tensor::zeros(&[2])], &cfg, 1);
        assert_eq!(s.iter().next().unwrap().tensor.data(), &[2.0 * 0.999, -4.0 * 0.999]);
    }

    #[test]
    fn first_step_is_sign_step() {
        let mut s = store(&[0.0, 0.0]);
        let cfg = TrainConfig { learning_rate: 0.01, weight_decay: 0.0, grad_clip: 0.0, ..Default::default() };
        adam_step(&mut s, &[Tensor::new(&[2], vec![3.0, -0.5]).unwrap()], &cfg, 1);
        let t = s.iter().next().unwrap().tensor.data().to_vec();
        assert!((t[0] + 0.01).abs() < 1e-9 && (t[1] - 0.01).abs() < 1e-9, "{t:?}");
    }

    #[test]
    fn two_steps_match_hand_recurrence() {
        let cfg = TrainConfig { learning_rate: 0.05, weight_decay: 0.1, grad_clip: 0.0, ..Default::default() };
        let g = 0.7;
        let mut s = store(&[1.5]);
        for step in 1..=2 {
            adam_step(&mut s, &[Tensor::new(&[1], vec![g]).unwrap()], &cfg, step);
        }
        let (b1, b2, lr, wd, eps) = (0.9f64, 0.999f64, 0.05, 0.1, 1e-8);
        let (mut th, mut m, mut v) = (1.5f64, 0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            th = th * (1.0 - lr * wd) - lr * mh / (vh.sqrt() + eps);
        }
        assert!((s.iter().next().unwrap().tensor.data()[0] - th).abs() < 1e-12);
    }

    #[test]
    fn clipping_scales_gradient() {
        let cfg = TrainConfig { learning_rate: 1.0, weight_decay: 0.0, grad_clip: 1.0, ..Default::default() };
        let mut a = store(&[0.0, 0.0]);
        let norm = adam_step(&mut a, &[Tensor::new(&[2], vec![30.0, 40.0]).unwrap()], &cfg, 1);
        assert_eq!(norm, 50.0);
        let p = a.iter().next().unwrap();
        assert!((p.m.data()[0] - 0.1 * 0.6).abs() < 1e-12);
    }

    #[test]
    fn frozen_parameters_untouched() {
        let mut s = ParamStore::<f64>::new();
        s.add("fixed", Tensor::full(&[2], 3.0), false).unwrap();
        adam_step(&mut s, &[Tensor::full(&[2], 1.0)], &TrainConfig::default(), 1);
        assert_eq!(s.iter().next().unwrap().tensor.data(), &[3.0, 3.0]);
    }
}
