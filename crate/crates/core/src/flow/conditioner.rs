//! Conditioning network: an unconstrained feature extractor turning the FBP image into
//! one feature map per conv level plus a feature vector for the dense level.

use rand_chacha::ChaCha8Rng;

use super::config::ArchConfig;
use super::layers::{leaky, BatchNorm, Conv, Ctx};
use crate::error::Result;
use crate::grad::{ParamStore, Real, Var};

#[derive(Clone, Debug)]
enum Op {
    Conv(Conv),
    Bn(BatchNorm),
    Leaky,
    Pool,
}

#[derive(Clone, Debug)]
pub struct ConditioningNetwork {
    /// One stage per conv level, then the vector stage.
    stages: Vec<Vec<Op>>,
}

/// Outputs of the conditioning network for a batch.
pub struct Features<T> {
    /// `[N, cond_channels[l], S_l, S_l]` per conv level.
    pub levels: Vec<Var<T>>,
    /// `[N, cond_vector]`.
    pub vector: Var<T>,
}

struct StageBuilder<'s, T: Real> {
    store: &'s mut ParamStore<T>,
    name: String,
    ops: Vec<Op>,
}

impl<T: Real> StageBuilder<'_, T> {
    fn conv(&mut self, cin: usize, cout: usize, kernel: usize, stride: usize) -> Result<&mut Self> {
        let name = format!("{}.conv{}", self.name, self.ops.len());
        self.ops.push(Op::Conv(Conv::register(self.store, &name, cin, cout, kernel, stride)?));
        Ok(self)
    }

    fn bn(&mut self, channels: usize) -> Result<&mut Self> {
        let name = format!("{}.bn{}", self.name, self.ops.len());
        self.ops.push(Op::Bn(BatchNorm::register(self.store, &name, channels)?));
        Ok(self)
    }

    fn leaky(&mut self) -> &mut Self {
        self.ops.push(Op::Leaky);
        self
    }
}

impl ConditioningNetwork {
    pub fn register<T: Real>(store: &mut ParamStore<T>, arch: &ArchConfig) -> Result<Self> {
        let c = &arch.cond_channels;
        let h = &arch.cond_hidden;
        let levels = arch.levels;
        let mut stages = Vec::with_capacity(levels + 1);
        let mut stage = |store: &mut ParamStore<T>,
                         idx: usize,
                         build: &dyn Fn(&mut StageBuilder<T>) -> Result<()>|
         -> Result<()> {
            let mut b = StageBuilder { store, name: format!("cond.stage{idx}"), ops: Vec::new() };
            build(&mut b)?;
            stages.push(b.ops);
            Ok(())
        };
        stage(store, 1, &|b| {
            b.conv(1, h[0], 3, 2)?.leaky();
            b.conv(h[0], h[0], 3, 1)?.leaky();
            b.conv(h[0], h[0], 3, 1)?.bn(h[0])?.leaky();
            b.conv(h[0], h[0], 3, 1)?.bn(h[0])?.leaky();
            b.conv(h[0], h[0], 3, 1)?.bn(h[0])?.leaky();
            b.conv(h[0], c[0], 3, 1)?.bn(c[0])?;
            Ok(())
        })?;
        for l in 1..levels {
            stage(store, l + 1, &|b| {
                b.leaky();
                if l == 1 {
                    b.conv(c[0], h[1], 3, 2)?.bn(h[1])?.leaky();
                    b.conv(h[1], h[1], 1, 1)?.leaky();
                    b.conv(h[1], h[1], 3, 1)?.bn(h[1])?.leaky();
                    b.conv(h[1], c[1], 3, 1)?.bn(c[1])?;
                } else {
                    b.conv(c[l - 1], h[l], 1, 1)?.leaky();
                    b.conv(h[l], h[l], 3, 2)?.leaky();
                    b.conv(h[l], c[l], 3, 1)?.bn(c[l])?;
                }
                Ok(())
            })?;
        }
        let last = c[levels - 1];
        let hv = h[levels - 1];
        stage(store, levels + 1, &|b| {
            b.leaky();
            b.conv(last, hv, 3, 2)?.leaky();
            b.conv(hv, arch.cond_vector, 3, 2)?.leaky();
            b.ops.push(Op::Pool);
            b.bn(arch.cond_vector)?;
            Ok(())
        })?;
        Ok(Self { stages })
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut ChaCha8Rng) {
        for op in self.stages.iter().flatten() {
            match op {
                Op::Conv(c) => c.init(store, rng, false),
                Op::Bn(b) => b.init(store),
                Op::Leaky | Op::Pool => {}
            }
        }
    }

    /// `fbp: [N, 1, S, S]`.
    pub fn forward<T: Real>(&self, ctx: &Ctx<T>, fbp: &Var<T>) -> Result<Features<T>> {
        let mut x = fbp.clone();
        let mut levels = Vec::with_capacity(self.stages.len() - 1);
        for (i, stage) in self.stages.iter().enumerate() {
            for op in stage {
                x = match op {
                    Op::Conv(c) => c.forward(ctx, &x)?,
                    Op::Bn(b) if x.shape().len() == 2 => {
                        let shape = x.shape().to_vec();
                        let y = b.forward(ctx, &ctx.tape.reshape(&x, &[shape[0], shape[1], 1, 1])?)?;
                        ctx.tape.reshape(&y, &shape)?
                    }
                    Op::Bn(b) => b.forward(ctx, &x)?,
                    Op::Leaky => leaky(ctx, &x)?,
                    Op::Pool => ctx.tape.avg_pool_global(&x)?,
                };
            }
            if i + 1 < self.stages.len() {
                levels.push(x.clone());
            }
        }
        Ok(Features { levels, vector: x })
    }
}
