//! Invertible 1×1 convolution with an LU-parameterized weight `W = P·L·U`.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::layers::Ctx;
use crate::error::{dim_err, Result};
use crate::grad::{ParamId, ParamStore, Real, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InvConvInit {
    /// `W` is a random rotation (orthogonal, `|det| = 1`).
    Rotation,
    /// `W = I`.
    Identity,
}

#[derive(Clone, Debug)]
pub struct Inv1x1 {
    pub channels: usize,
    /// Row permutation, stored as float indices so it travels with the checkpoint.
    pub perm: ParamId,
    pub lower: ParamId,
    pub upper: ParamId,
    pub log_diag: ParamId,
    pub sign: ParamId,
}

/// Row `i` of `W` is row `perm[i]` of `L·U`.
pub struct PluFactors {
    pub perm: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Random orthogonal matrix: Gram–Schmidt on a Gaussian matrix (row-major).
pub fn random_rotation(c: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut q: Vec<f64> = (0..c * c).map(|_| StandardNormal.sample(rng)).collect();
        let mut ok = true;
        for i in 0..c {
            for j in 0..i {
                let d: f64 = (0..c).map(|k| q[i * c + k] * q[j * c + k]).sum();
                for k in 0..c {
                    q[i * c + k] -= d * q[j * c + k];
                }
            }
            let n: f64 = (0..c).map(|k| q[i * c + k].powi(2)).sum::<f64>().sqrt();
            if n < 1e-6 {
                ok = false;
                break;
            }
            for k in 0..c {
                q[i * c + k] /= n;
            }
        }
        if ok {
            return q;
        }
    }
}

/// LU factorization with partial pivoting of a row-major square matrix.
pub fn plu_factorize(a: &[f64], c: usize) -> PluFactors {
    let mut m = a.to_vec();
    let mut rows: Vec<usize> = (0..c).collect();
    for k in 0..c {
        let p = (k..c).max_by(|&i, &j| m[i * c + k].abs().total_cmp(&m[j * c + k].abs())).unwrap();
        if p != k {
            for col in 0..c {
                m.swap(k * c + col, p * c + col);
            }
            rows.swap(k, p);
        }
        let pivot = m[k * c + k];
        for i in k + 1..c {
            let f = m[i * c + k] / pivot;
            m[i * c + k] = f;
            for col in k + 1..c {
                m[i * c + col] -= f * m[k * c + col];
            }
        }
    }
    // (L·U)[k] = A[rows[k]], so W = A needs perm[rows[k]] = k
    let mut perm = vec![0; c];
    for (k, &r) in rows.iter().enumerate() {
        perm[r] = k;
    }
    let lower = (0..c * c).map(|i| if i / c > i % c { m[i] } else { 0.0 }).collect();
    let upper = (0..c * c).map(|i| if i / c <= i % c { m[i] } else { 0.0 }).collect();
    PluFactors { perm, lower, upper }
}

impl Inv1x1 {
    pub fn register<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        let c = channels;
        Ok(Self {
            channels,
            perm: store.add(format!("{name}.perm"), Tensor::from_fn(&[c], |i| T::of(i as f64)), false)?,
            lower: store.add(format!("{name}.lower"), Tensor::zeros(&[c, c]), true)?,
            upper: store.add(format!("{name}.upper"), Tensor::zeros(&[c, c]), true)?,
            log_diag: store.add(format!("{name}.log_diag"), Tensor::zeros(&[c]), true)?,
            sign: store.add(format!("{name}.sign"), Tensor::full(&[c], T::one()), false)?,
        })
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, how: InvConvInit) {
        let c = self.channels;
        let w = match how {
            InvConvInit::Rotation => random_rotation(c, rng),
            InvConvInit::Identity => (0..c * c).map(|i| if i / c == i % c { 1.0 } else { 0.0 }).collect(),
        };
        self.set_weight(store, &w);
    }

    /// Store the PLU factors of an invertible row-major `C×C` matrix.
    pub fn set_weight<T: Real>(&self, store: &mut ParamStore<T>, w: &[f64]) {
        let c = self.channels;
        let f = plu_factorize(w, c);
        let diag: Vec<f64> = (0..c).map(|i| f.upper[i * c + i]).collect();
        let strict_upper: Vec<f64> = (0..c * c).map(|i| if i / c < i % c { f.upper[i] } else { 0.0 }).collect();
        let put = |store: &mut ParamStore<T>, id: ParamId, v: &[f64]| {
            let p = store.get_mut(id);
            p.tensor = Tensor::new(p.tensor.shape(), v.iter().map(|&x| T::of(x)).collect()).expect("shape");
        };
        put(store, self.perm, &f.perm.iter().map(|&i| i as f64).collect::<Vec<_>>());
        put(store, self.lower, &f.lower);
        put(store, self.upper, &strict_upper);
        put(store, self.log_diag, &diag.iter().map(|d| d.abs().ln()).collect::<Vec<_>>());
        put(store, self.sign, &diag.iter().map(|d| d.signum()).collect::<Vec<_>>());
    }

    pub fn perm<T: Real>(&self, store: &ParamStore<T>) -> Vec<usize> {
        store.tensor(self.perm).data().iter().map(|v| v.f64().round() as usize).collect()
    }

    /// The composed weight, differentiable in the factors.
    pub fn weight<T: Real>(&self, ctx: &Ctx<T>) -> Result<Var<T>> {
        let perm = self.perm(ctx.store);
        ctx.tape.plu_compose(
            &perm,
            ctx.var(self.lower),
            ctx.var(self.upper),
            ctx.var(self.log_diag),
            ctx.store.tensor(self.sign).data(),
        )
    }

    /// `W` as a plain row-major `f64` matrix.
    pub fn weight_matrix<T: Real>(&self, store: &ParamStore<T>) -> Vec<f64> {
        let c = self.channels;
        let (l, u, ld, sg) = (
            store.tensor(self.lower).data(),
            store.tensor(self.upper).data(),
            store.tensor(self.log_diag).data(),
            store.tensor(self.sign).data(),
        );
        let lu_at = |i: usize, j: usize| -> f64 {
            (0..=i.min(j))
                .map(|k| {
                    let lik = if i == k { 1.0 } else { l[i * c + k].f64() };
                    let ukj = if k == j { sg[k].f64() * ld[k].f64().exp() } else { u[k * c + j].f64() };
                    lik * ukj
                })
                .sum()
        };
        let perm = self.perm(store);
        (0..c * c).map(|idx| lu_at(perm[idx / c], idx % c)).collect()
    }

    /// `W⁻¹ = U⁻¹ L⁻¹ Pᵀ` by triangular solves against the identity.
    pub fn inverse_matrix<T: Real>(&self, store: &ParamStore<T>) -> Vec<f64> {
        let c = self.channels;
        let (l, u, ld, sg) = (
            store.tensor(self.lower).data(),
            store.tensor(self.upper).data(),
            store.tensor(self.log_diag).data(),
            store.tensor(self.sign).data(),
        );
        let perm = self.perm(store);
        let mut inv = vec![0.0; c * c];
        // column j of W⁻¹ solves P·L·U x = e_j, i.e. L·U x = Pᵀ e_j
        for j in 0..c {
            // (Pᵀ e_j)[perm[i]] = (e_j)[i]
            let mut b = vec![0.0; c];
            b[perm[j]] = 1.0;
            for i in 0..c {
                let s: f64 = (0..i).map(|k| l[i * c + k].f64() * b[k]).sum();
                b[i] -= s;
            }
            for i in (0..c).rev() {
                let s: f64 = (i + 1..c).map(|k| u[i * c + k].f64() * b[k]).sum();
                let d = sg[i].f64() * ld[i].f64().exp();
                b[i] = (b[i] - s) / d;
            }
            for i in 0..c {
                inv[i * c + j] = b[i];
            }
        }
        inv
    }

    fn check<T: Real>(&self, x: &Var<T>) -> Result<[usize; 4]> {
        let d = x.value().dims4()?;
        if d[1] != self.channels {
            return Err(dim_err!("1x1 conv expects {} channels, got {:?}", self.channels, x.shape()));
        }
        Ok(d)
    }

    /// `y = W x` per pixel; log-determinant `H·W·Σ log|U_ii|` per sample.
    pub fn forward<T: Real>(&self, ctx: &Ctx<T>, x: &Var<T>) -> Result<(Var<T>, Var<T>)> {
        let [n, c, h, w] = self.check(x)?;
        let weight = ctx.tape.reshape(&self.weight(ctx)?, &[c, c, 1, 1])?;
        let y = ctx.tape.conv2d(x, &weight, None, 1, 0)?;
        let per_pixel = ctx.tape.sum(ctx.var(self.log_diag))?;
        let total = ctx.tape.scale(&per_pixel, T::of((h * w) as f64))?;
        let logdet = ctx.tape.add_scalar(&Var::constant(Tensor::zeros(&[n])), &total)?;
        Ok((y, logdet))
    }

    pub fn inverse<T: Real>(&self, ctx: &Ctx<T>, y: &Var<T>) -> Result<Var<T>> {
        let [_, c, _, _] = self.check(y)?;
        let inv = self.inverse_matrix(ctx.store);
        let w = Var::constant(Tensor::new(&[c, c, 1, 1], inv.into_iter().map(T::of).collect())?);
        ctx.tape.conv2d(y, &w, None, 1, 0)
    }
}

/// Fixed permutation of the flattened features, stored as float indices.
#[derive(Clone, Debug)]
pub struct Permutation {
    pub len: usize,
    pub index: ParamId,
}

impl Permutation {
    pub fn register<T: Real>(store: &mut ParamStore<T>, name: &str, len: usize) -> Result<Self> {
        let index = store.add(format!("{name}.index"), Tensor::from_fn(&[len], |i| T::of(i as f64)), false)?;
        Ok(Self { len, index })
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) {
        use rand::seq::SliceRandom;
        let mut p: Vec<usize> = (0..self.len).collect();
        p.shuffle(rng);
        store.get_mut(self.index).tensor = Tensor::from_fn(&[self.len], |i| T::of(p[i] as f64));
    }

    fn indices<T: Real>(&self, store: &ParamStore<T>) -> Vec<usize> {
        store.tensor(self.index).data().iter().map(|v| v.f64().round() as usize).collect()
    }

    /// `y[i] = x[p[i]]`.
    pub fn forward<T: Real>(&self, ctx: &Ctx<T>, x: &Var<T>) -> Result<Var<T>> {
        let idx: Rc<[usize]> = self.indices(ctx.store).into();
        ctx.tape.gather_items(x, idx, x.shape())
    }

    pub fn inverse<T: Real>(&self, ctx: &Ctx<T>, y: &Var<T>) -> Result<Var<T>> {
        let p = self.indices(ctx.store);
        let mut inv = vec![0; p.len()];
        for (i, &j) in p.iter().enumerate() {
            inv[j] = i;
        }
        ctx.tape.gather_items(y, inv.into(), y.shape())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn plu_reconstructs_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = 5;
        let q = random_rotation(c, &mut rng);
        let mut store = ParamStore::<f64>::new();
        let conv = Inv1x1::register(&mut store, "c", c).unwrap();
        conv.set_weight(&mut store, &q);
        let w = conv.weight_matrix(&store);
        for (a, b) in w.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
        let inv = conv.inverse_matrix(&store);
        for i in 0..c {
            for j in 0..c {
                let v: f64 = (0..c).map(|k| w[i * c + k] * inv[k * c + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let logdet: f64 = store.tensor(conv.log_diag).data().iter().sum();
        assert!(logdet.abs() < 1e-12);
    }

    #[test]
    fn rotation_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = 4;
        let q = random_rotation(c, &mut rng);
        for i in 0..c {
            for j in 0..c {
                let d: f64 = (0..c).map(|k| q[i * c + k] * q[j * c + k]).sum();
                assert!((d - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }
}
