//! Conditional affine coupling.
//!
//! The input is split along axis 1 into `u1` (first half) and `u2`:
//!
//! ```text
//! v1 = u1 ⊙ exp(ŝ1(u2, c)) + t1(u2, c)
//! v2 = u2 ⊙ exp(ŝ2(v1, c)) + t2(v1, c)
//! ```
//!
//! with `ŝ = α·tanh(s/α)`. Each of the two subnetworks emits `[s; t]` stacked along
//! axis 1, and the conditioning input `c` (if any) is concatenated to its input.

use rand_chacha::ChaCha8Rng;

use super::layers::{Ctx, Subnet};
use crate::error::{dim_err, Result};
use crate::grad::{ParamStore, Real, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubnetKind {
    Conv { kernel: usize },
    Dense,
}

#[derive(Clone, Debug)]
pub struct Coupling {
    pub len1: usize,
    pub len2: usize,
    pub cond_len: usize,
    pub clamp: f64,
    pub net1: Subnet,
    pub net2: Subnet,
}

impl Coupling {
    /// `channels` is the size of axis 1; `cond_len` the conditioning channels (0 for none).
    pub fn register<T: Real>(
        store: &mut ParamStore<T>,
        name: &str,
        channels: usize,
        cond_len: usize,
        hidden: usize,
        kind: SubnetKind,
        clamp: f64,
    ) -> Result<Self> {
        if channels < 2 {
            return Err(dim_err!("coupling {name} needs at least 2 channels, got {channels}"));
        }
        let len1 = channels / 2;
        let len2 = channels - len1;
        let make = |store: &mut ParamStore<T>, sub: &str, cin: usize, cout: usize| match kind {
            SubnetKind::Conv { kernel } => Subnet::conv(store, &format!("{name}.{sub}"), cin + cond_len, hidden, 2 * cout, kernel),
            SubnetKind::Dense => Subnet::dense(store, &format!("{name}.{sub}"), cin + cond_len, hidden, 2 * cout),
        };
        let net1 = make(store, "net1", len2, len1)?;
        let net2 = make(store, "net2", len1, len2)?;
        Ok(Self { len1, len2, cond_len, clamp, net1, net2 })
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) {
        self.net1.init(store, rng, true);
        self.net2.init(store, rng, true);
    }

    fn check<T: Real>(&self, x: &Var<T>, cond: Option<&Var<T>>) -> Result<()> {
        let s = x.shape();
        if s.len() < 2 || s[1] != self.len1 + self.len2 {
            return Err(dim_err!("coupling expects {} channels, got shape {:?}", self.len1 + self.len2, s));
        }
        match (cond, self.cond_len) {
            (None, 0) => Ok(()),
            (Some(c), n) if n > 0 => {
                let cs = c.shape();
                if cs.len() != s.len() || cs[0] != s[0] || cs[1] != n || cs[2..] != s[2..] {
                    return Err(dim_err!("conditioning shape {:?} does not match input {:?} with {n} channels", cs, s));
                }
                Ok(())
            }
            _ => Err(dim_err!("coupling conditioning presence does not match its configuration")),
        }
    }

    /// Returns `(ŝ, t)` from one subnetwork applied to `(x, cond)`.
    fn scale_shift<T: Real>(
        &self,
        ctx: &Ctx<T>,
        net: &Subnet,
        x: &Var<T>,
        cond: Option<&Var<T>>,
        len: usize,
    ) -> Result<(Var<T>, Var<T>)> {
        let input = match cond {
            Some(c) => ctx.tape.concat1(&[x, c])?,
            None => x.clone(),
        };
        let h = net.forward(ctx, &input)?;
        let s = ctx.tape.slice1(&h, 0, len)?;
        let t = ctx.tape.slice1(&h, len, len)?;
        Ok((ctx.tape.soft_clamp(&s, T::of(self.clamp))?, t))
    }

    /// Forward map and per-sample log-determinant `Σ ŝ1 + Σ ŝ2`.
    pub fn forward<T: Real>(&self, ctx: &Ctx<T>, u: &Var<T>, cond: Option<&Var<T>>) -> Result<(Var<T>, Var<T>)> {
        self.check(u, cond)?;
        let tape = ctx.tape;
        let u1 = tape.slice1(u, 0, self.len1)?;
        let u2 = tape.slice1(u, self.len1, self.len2)?;
        let (s1, t1) = self.scale_shift(ctx, &self.net1, &u2, cond, self.len1)?;
        let v1 = tape.add(&tape.mul(&u1, &tape.exp(&s1)?)?, &t1)?;
        let (s2, t2) = self.scale_shift(ctx, &self.net2, &v1, cond, self.len2)?;
        let v2 = tape.add(&tape.mul(&u2, &tape.exp(&s2)?)?, &t2)?;
        let logdet = tape.add(&tape.sum_items(&s1)?, &tape.sum_items(&s2)?)?;
        Ok((tape.concat1(&[&v1, &v2])?, logdet))
    }

    /// Inverse map; `v2` is undone first because `ŝ2, t2` depend on `v1` only.
    pub fn inverse<T: Real>(&self, ctx: &Ctx<T>, v: &Var<T>, cond: Option<&Var<T>>) -> Result<Var<T>> {
        self.check(v, cond)?;
        let tape = ctx.tape;
        let v1 = tape.slice1(v, 0, self.len1)?;
        let v2 = tape.slice1(v, self.len1, self.len2)?;
        let (s2, t2) = self.scale_shift(ctx, &self.net2, &v1, cond, self.len2)?;
        let u2 = tape.mul(&tape.sub(&v2, &t2)?, &tape.exp(&tape.scale(&s2, -T::one())?)?)?;
        let (s1, t1) = self.scale_shift(ctx, &self.net1, &u2, cond, self.len1)?;
        let u1 = tape.mul(&tape.sub(&v1, &t1)?, &tape.exp(&tape.scale(&s1, -T::one())?)?)?;
        tape.concat1(&[&u1, &u2])
    }
}
