//! Parameterized layers built from tape primitives.

use std::cell::RefCell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grad::{Bound, ParamId, ParamStore, Real, Tape, Tensor, Var, LEAKY_SLOPE};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm; running statistics are updated.
    Train,
    /// Running statistics in batch norm.
    Eval,
}

/// New running statistics for batch-norm layers, by parameter.
pub type BnUpdates<T> = Vec<(ParamId, Vec<T>)>;

/// Everything a forward pass needs besides its inputs.
pub struct Ctx<'a, T: Real> {
    pub tape: &'a Tape<T>,
    pub store: &'a ParamStore<T>,
    pub vars: &'a Bound<T>,
    pub mode: Mode,
    bn_updates: RefCell<BnUpdates<T>>,
}

impl<'a, T: Real> Ctx<'a, T> {
    pub fn new(tape: &'a Tape<T>, store: &'a ParamStore<T>, vars: &'a Bound<T>, mode: Mode) -> Self {
        Self { tape, store, vars, mode, bn_updates: RefCell::new(Vec::new()) }
    }

    pub fn var(&self, id: ParamId) -> &Var<T> {
        self.vars.var(id)
    }

    /// Running-statistics values produced by train-mode batch norm, to be written back
    /// with [`apply_bn_updates`].
    pub fn take_bn_updates(&self) -> BnUpdates<T> {
        std::mem::take(&mut *self.bn_updates.borrow_mut())
    }
}

pub fn apply_bn_updates<T: Real>(store: &mut ParamStore<T>, updates: BnUpdates<T>) {
    for (id, values) in updates {
        store.get_mut(id).tensor.data_mut().copy_from_slice(&values);
    }
}

/// Weight initialization: uniform in `±1/sqrt(fan_in)`.
pub fn fan_in_uniform<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-bound..bound)))
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv {
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
    ) -> Result<Self> {
        let weight = store.add(format!("{name}.w"), Tensor::zeros(&[cout, cin, kernel, kernel]), true)?;
        let bias = store.add(format!("{name}.b"), Tensor::zeros(&[cout]), true)?;
        Ok(Self { weight, bias, kernel, stride })
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, zero: bool) {
        let shape = store.tensor(self.weight).shape().to_vec();
        let fan_in = shape[1] * shape[2] * shape[3];
        store.get_mut(self.weight).tensor =
            if zero { Tensor::zeros(&shape) } else { fan_in_uniform(rng, &shape, fan_in) };
        let b = store.get_mut(self.bias);
        b.tensor = Tensor::zeros(b.tensor.shape());
    }

    pub fn forward<T: Real>(&self, ctx: &Ctx<T>, x: &Var<T>) -> Result<Var<T>> {
        ctx.tape.conv2d(x, ctx.var(self.weight), Some(ctx.var(self.bias)), self.stride, self.kernel / 2)
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn register<T: Real>(store: &mut ParamStore<T>, name: &str, fin: usize, fout: usize) -> Result<Self> {
        let weight = store.add(format!("{name}.w"), Tensor::zeros(&[fout, fin]), true)?;
        let bias = store.add(format!("{name}.b"), Tensor::zeros(&[fout]), true)?;
        Ok(Self { weight, bias })
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, zero: bool) {
        let shape = store.tensor(self.weight).shape().to_vec();
        store.get_mut(self.weight).tensor = if zero { Tensor::zeros(&shape) } else { fan_in_uniform(rng, &shape, shape[1]) };
        let b = store.get_mut(self.bias);
        b.tensor = Tensor::zeros(b.tensor.shape());
    }

    pub fn forward<T: Real>(&self, ctx: &Ctx<T>, x: &Var<T>) -> Result<Var<T>> {
        ctx.tape.dense(x, ctx.var(self.weight), ctx.var(self.bias))
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub scale: ParamId,
    pub shift: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl BatchNorm {
    pub fn register<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            scale: store.add(format!("{name}.scale"), Tensor::full(&[channels], T::one()), true)?,
            shift: store.add(format!("{name}.shift"), Tensor::zeros(&[channels]), true)?,
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), false)?,
            running_var: store.add(format!("{name}.running_var"), Tensor::full(&[channels], T::one()), false)?,
        })
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>) {
        for (id, v) in [(self.scale, T::one()), (self.shift, T::zero()), (self.running_mean, T::zero()), (self.running_var, T::one())] {
            let p = store.get_mut(id);
            p.tensor = Tensor::full(p.tensor.shape(), v);
        }
    }

    pub fn forward<T: Real>(&self, ctx: &Ctx<T>, x: &Var<T>) -> Result<Var<T>> {
        let eps = T::of(BN_EPS);
        match ctx.mode {
            Mode::Train => {
                let (y, stats) = ctx.tape.batch_norm_train(x, ctx.var(self.scale), ctx.var(self.shift), eps)?;
                let m = T::of(BN_MOMENTUM);
                let blend = |old: &Tensor<T>, new: &[T]| -> Vec<T> {
                    old.data().iter().zip(new).map(|(&o, &n)| (T::one() - m) * o + m * n).collect()
                };
                let mut updates = ctx.bn_updates.borrow_mut();
                updates.push((self.running_mean, blend(ctx.store.tensor(self.running_mean), &stats.mean)));
                updates.push((self.running_var, blend(ctx.store.tensor(self.running_var), &stats.var_unbiased)));
                Ok(y)
            }
            Mode::Eval => ctx.tape.batch_norm_eval(
                x,
                ctx.var(self.scale),
                ctx.var(self.shift),
                ctx.store.tensor(self.running_mean).data(),
                ctx.store.tensor(self.running_var).data(),
                eps,
            ),
        }
    }
}

pub fn leaky<T: Real>(ctx: &Ctx<T>, x: &Var<T>) -> Result<Var<T>> {
    ctx.tape.leaky_relu(x, T::of(LEAKY_SLOPE))
}

/// Three-layer subnetwork producing coupling log-scales and shifts. The last layer is
/// zero-initialized so a fresh coupling is the identity.
#[derive(Clone, Debug)]
pub enum Subnet {
    Conv([Conv; 3]),
    Dense([Dense; 3]),
}

impl Subnet {
    pub fn conv<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        cin: usize,
        hidden: usize,
        cout: usize,
        kernel: usize,
    ) -> Result<Self> {
        Ok(Subnet::Conv([
            Conv::register(store, &format!("{name}.l0"), cin, hidden, kernel, 1)?,
            Conv::register(store, &format!("{name}.l1"), hidden, hidden, kernel, 1)?,
            Conv::register(store, &format!("{name}.l2"), hidden, cout, kernel, 1)?,
        ]))
    }

    pub fn dense<T: Real>(store: &mut ParamStore<T>, name: &str, fin: usize, hidden: usize, fout: usize) -> Result<Self> {
        Ok(Subnet::Dense([
            Dense::register(store, &format!("{name}.l0"), fin, hidden)?,
            Dense::register(store, &format!("{name}.l1"), hidden, hidden)?,
            Dense::register(store, &format!("{name}.l2"), hidden, fout)?,
        ]))
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, zero_last: bool) {
        match self {
            Subnet::Conv(l) => l.iter().enumerate().for_each(|(i, c)| c.init(store, rng, zero_last && i == 2)),
            Subnet::Dense(l) => l.iter().enumerate().for_each(|(i, d)| d.init(store, rng, zero_last && i == 2)),
        }
    }

    /// Final layer `(weight, bias)`.
    pub fn last(&self) -> (ParamId, ParamId) {
        match self {
            Subnet::Conv(l) => (l[2].weight, l[2].bias),
            Subnet::Dense(l) => (l[2].weight, l[2].bias),
        }
    }

    pub fn forward<T: Real>(&self, ctx: &Ctx<T>, x: &Var<T>) -> Result<Var<T>> {
        match self {
            Subnet::Conv(l) => {
                let h = leaky(ctx, &l[0].forward(ctx, x)?)?;
                let h = leaky(ctx, &l[1].forward(ctx, &h)?)?;
                l[2].forward(ctx, &h)
            }
            Subnet::Dense(l) => {
                let h = leaky(ctx, &l[0].forward(ctx, x)?)?;
                let h = leaky(ctx, &l[1].forward(ctx, &h)?)?;
                l[2].forward(ctx, &h)
            }
        }
    }
}
