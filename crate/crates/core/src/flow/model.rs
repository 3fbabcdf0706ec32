//! The multi-scale conditional flow.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conditioner::{ConditioningNetwork, Features};
use super::config::{ArchConfig, DownsampleKind};
use super::coupling::{Coupling, SubnetKind};
use super::downsample::{downsample, upsample};
use super::inv1x1::{Inv1x1, InvConvInit, Permutation};
use super::layers::{Ctx, Mode};
use crate::error::{dim_err, Error, Result};
use crate::grad::{Checkpoint, ParamStore, Real, Tape, Tensor, Var};
use crate::tomo::Geometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Cond {
    None,
    Level(usize),
    Vector,
}

#[derive(Clone, Debug)]
enum Block {
    Downsample(DownsampleKind),
    Inv(Inv1x1),
    Coupling(Coupling, Cond),
    /// Moves the trailing `slice` channels to the latent vector.
    Split { slice: usize },
    /// `[N, C, S, S] -> [N, C·S·S]`.
    Flatten { shape: [usize; 3] },
    Permute(Permutation),
}

impl Block {
    fn name(&self) -> &'static str {
        match self {
            Block::Downsample(DownsampleKind::Haar) => "haar",
            Block::Downsample(DownsampleKind::Irevnet) => "irevnet",
            Block::Inv(_) => "inv1x1",
            Block::Coupling(_, Cond::None) => "coupling",
            Block::Coupling(..) => "cond_coupling",
            Block::Split { .. } => "split",
            Block::Flatten { .. } => "flatten",
            Block::Permute(_) => "permute",
        }
    }
}

/// Where one piece of the latent vector comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSlice {
    pub offset: usize,
    /// Per-sample shape `[C, S, S]` or `[D]`.
    pub shape: Vec<usize>,
}

impl LatentSlice {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Text block stored in checkpoints so that they are self-describing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub arch: ArchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Geometry>,
    pub latent: Vec<LatentSlice>,
}

impl ModelBlock {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model block serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let b: Self = toml::from_str(text).map_err(|e| Error::Config(format!("model block: {e}")))?;
        b.arch.validate()?;
        Ok(b)
    }
}

/// Result of a recorded forward pass.
pub struct FlowOutput<T> {
    /// `[N, D]` with `D` the pixel count.
    pub z: Var<T>,
    /// `[N]`.
    pub logdet: Var<T>,
    /// `(block kind, [N] log-determinant)` for each block, in order.
    pub block_logdets: Vec<(&'static str, Var<T>)>,
}

/// Ordered invertible blocks plus the conditioning network and their parameters.
#[derive(Clone, Debug)]
pub struct FlowModel<T: Real> {
    pub arch: ArchConfig,
    pub store: ParamStore<T>,
    blocks: Vec<Block>,
    cond: ConditioningNetwork,
    latent: Vec<LatentSlice>,
}

impl<T: Real> FlowModel<T> {
    /// Build and initialize: subnet output layers zero, 1×1 convolutions random rotations.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        let mut m = Self::structure(arch)?;
        m.init(seed, InvConvInit::Rotation);
        Ok(m)
    }

    /// Registers every parameter with placeholder values.
    pub fn structure(arch: ArchConfig) -> Result<Self> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let s = &mut store;
        let mut blocks = Vec::new();
        let mut latent = Vec::new();
        let mut offset = 0;
        let mut push_slice = |latent: &mut Vec<LatentSlice>, shape: Vec<usize>| {
            let l = LatentSlice { offset, shape };
            offset += l.len();
            latent.push(l);
        };
        let mut c = 1;
        let mut side = arch.image_size;
        for l in 0..arch.levels {
            let lv = l + 1;
            c *= 4;
            side /= 2;
            blocks.push(Block::Downsample(arch.downsample[l]));
            for k in 0..2 {
                let name = format!("down{lv}.{k}");
                blocks.push(Block::Inv(Inv1x1::register(s, &format!("{name}.inv"), c)?));
                let cp = Coupling::register(
                    s,
                    &format!("{name}.coupling"),
                    c,
                    0,
                    arch.downsample_hidden,
                    SubnetKind::Conv { kernel: 1 },
                    arch.clamp,
                )?;
                blocks.push(Block::Coupling(cp, Cond::None));
            }
            if arch.split[l] > 0 {
                blocks.push(Block::Split { slice: arch.split[l] });
                c -= arch.split[l];
                push_slice(&mut latent, vec![arch.split[l], side, side]);
            }
            for k in 0..arch.couplings_per_level {
                let name = format!("level{lv}.{k}");
                let kernel = if k % 2 == 0 { 1 } else { 3 };
                let cp = Coupling::register(
                    s,
                    &format!("{name}.coupling"),
                    c,
                    arch.cond_channels[l],
                    arch.subnet_hidden[l],
                    SubnetKind::Conv { kernel },
                    arch.clamp,
                )?;
                blocks.push(Block::Coupling(cp, Cond::Level(l)));
                blocks.push(Block::Inv(Inv1x1::register(s, &format!("{name}.inv"), c)?));
            }
        }
        blocks.push(Block::Split { slice: arch.final_split });
        push_slice(&mut latent, vec![arch.final_split, side, side]);
        c -= arch.final_split;
        blocks.push(Block::Flatten { shape: [c, side, side] });
        let dim = c * side * side;
        for k in 0..arch.dense_couplings {
            let name = format!("dense.{k}");
            blocks.push(Block::Permute(Permutation::register(s, &format!("{name}.perm"), dim)?));
            let cp = Coupling::register(
                s,
                &format!("{name}.coupling"),
                dim,
                arch.cond_vector,
                arch.dense_hidden,
                SubnetKind::Dense,
                arch.clamp,
            )?;
            blocks.push(Block::Coupling(cp, Cond::Vector));
        }
        push_slice(&mut latent, vec![dim]);
        let cond = ConditioningNetwork::register(s, &arch)?;
        Ok(Self { arch, store, blocks, cond, latent })
    }

    /// Reinitialize every parameter deterministically from `seed`.
    pub fn init(&mut self, seed: u64, inv: InvConvInit) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for b in &self.blocks {
            match b {
                Block::Inv(c) => c.init(&mut self.store, &mut rng, inv),
                Block::Coupling(c, _) => c.init(&mut self.store, &mut rng),
                Block::Permute(p) => p.init(&mut self.store, &mut rng),
                Block::Downsample(_) | Block::Split { .. } | Block::Flatten { .. } => {}
            }
        }
        self.cond.init(&mut self.store, &mut rng);
    }

    pub fn latent_layout(&self) -> &[LatentSlice] {
        &self.latent
    }

    /// Latent dimension, equal to the pixel count.
    pub fn dim(&self) -> usize {
        self.arch.image_size * self.arch.image_size
    }

    pub fn model_block(&self, geometry: Option<Geometry>) -> ModelBlock {
        ModelBlock { arch: self.arch.clone(), geometry, latent: self.latent.clone() }
    }

    pub fn to_checkpoint(&self, geometry: Option<Geometry>) -> Checkpoint {
        Checkpoint::from_store(&self.store, self.model_block(geometry).to_toml())
    }

    pub fn save(&self, path: &Path, geometry: Option<Geometry>) -> Result<()> {
        self.to_checkpoint(geometry).save(path)
    }

    /// Rebuild a model from a checkpoint's model block and parameter values.
    pub fn from_checkpoint(ck: Checkpoint, path: &Path) -> Result<(Self, ModelBlock)> {
        let block = ModelBlock::from_toml(&ck.model_block).map_err(|e| Error::format(path, e.to_string()))?;
        let mut m = Self::structure(block.arch.clone())?;
        if m.latent != block.latent {
            return Err(Error::format(path, "latent layout does not match the architecture"));
        }
        m.store.load_values(ck.params).map_err(|e| Error::format(path, e.to_string()))?;
        Ok((m, block))
    }

    pub fn load(path: &Path) -> Result<(Self, ModelBlock)> {
        Self::from_checkpoint(Checkpoint::load(path)?, path)
    }

    /// Same architecture and parameter values in another precision.
    pub fn cast<U: Real>(&self) -> FlowModel<U> {
        FlowModel {
            arch: self.arch.clone(),
            store: self.store.cast(),
            blocks: self.blocks.clone(),
            cond: self.cond.clone(),
            latent: self.latent.clone(),
        }
    }

    fn check_images(&self, x: &Var<T>, what: &str) -> Result<usize> {
        let s = self.arch.image_size;
        let [n, c, h, w] = x.value().dims4()?;
        if c != 1 || h != s || w != s {
            return Err(dim_err!("{what}: expected [N, 1, {s}, {s}], got {:?}", x.shape()));
        }
        Ok(n)
    }

    /// Run the conditioning network on `fbp: [N, 1, S, S]`.
    pub fn condition_features(&self, ctx: &Ctx<T>, fbp: &Var<T>) -> Result<Features<T>> {
        self.check_images(fbp, "conditioning input")?;
        self.cond.forward(ctx, fbp)
    }

    fn cond_for(features: &Features<T>, c: Cond) -> Option<&Var<T>> {
        match c {
            Cond::None => None,
            Cond::Level(l) => Some(&features.levels[l]),
            Cond::Vector => Some(&features.vector),
        }
    }

    fn check_features(&self, features: &Features<T>, n: usize) -> Result<()> {
        if features.levels.len() != self.arch.levels || features.vector.value().batch() != n {
            return Err(dim_err!("conditioning features do not match the model or batch size {n}"));
        }
        Ok(())
    }

    /// `x: [N, 1, S, S] -> (z: [N, S²], logdet: [N])`.
    pub fn forward(&self, ctx: &Ctx<T>, x: &Var<T>, features: &Features<T>) -> Result<FlowOutput<T>> {
        let n = self.check_images(x, "flow input")?;
        self.check_features(features, n)?;
        let tape = ctx.tape;
        let mut h = x.clone();
        let mut outs: Vec<Var<T>> = Vec::with_capacity(self.latent.len());
        let mut block_logdets = Vec::new();
        let zero = || Var::constant(Tensor::zeros(&[n]));
        for b in &self.blocks {
            let ld = match b {
                Block::Downsample(kind) => {
                    h = downsample(ctx, &h, *kind)?;
                    zero()
                }
                Block::Inv(c) => {
                    let (y, ld) = c.forward(ctx, &h)?;
                    h = y;
                    ld
                }
                Block::Coupling(c, cond) => {
                    let (y, ld) = c.forward(ctx, &h, Self::cond_for(features, *cond))?;
                    h = y;
                    ld
                }
                Block::Split { slice } => {
                    let ch = h.shape()[1];
                    let out = tape.slice1(&h, ch - slice, *slice)?;
                    outs.push(tape.reshape(&out, &[n, out.value().item_len()])?);
                    h = tape.slice1(&h, 0, ch - slice)?;
                    zero()
                }
                Block::Flatten { shape } => {
                    h = tape.reshape(&h, &[n, shape.iter().product()])?;
                    zero()
                }
                Block::Permute(p) => {
                    h = p.forward(ctx, &h)?;
                    zero()
                }
            };
            block_logdets.push((b.name(), ld));
        }
        outs.push(h);
        let refs: Vec<&Var<T>> = outs.iter().collect();
        let z = tape.concat1(&refs)?;
        let mut logdet = zero();
        for (_, ld) in &block_logdets {
            logdet = tape.add(&logdet, ld)?;
        }
        Ok(FlowOutput { z, logdet, block_logdets })
    }

    /// `z: [N, S²] -> x: [N, 1, S, S]`.
    pub fn inverse(&self, ctx: &Ctx<T>, z: &Var<T>, features: &Features<T>) -> Result<Var<T>> {
        let [n, d] = z.value().dims2()?;
        if d != self.dim() {
            return Err(dim_err!("latent has {d} dimensions, model expects {}", self.dim()));
        }
        self.check_features(features, n)?;
        let tape = ctx.tape;
        let mut slices = self.latent.iter().rev();
        let last = slices.next().expect("dense slice");
        let mut h = tape.slice1(z, last.offset, last.len())?;
        for b in self.blocks.iter().rev() {
            h = match b {
                Block::Downsample(kind) => upsample(ctx, &h, *kind)?,
                Block::Inv(c) => c.inverse(ctx, &h)?,
                Block::Coupling(c, cond) => c.inverse(ctx, &h, Self::cond_for(features, *cond))?,
                Block::Split { .. } => {
                    let s = slices.next().expect("one slice per split");
                    let out = tape.slice1(z, s.offset, s.len())?;
                    let mut shape = vec![n];
                    shape.extend(&s.shape);
                    tape.concat1(&[&h, &tape.reshape(&out, &shape)?])?
                }
                Block::Flatten { shape } => tape.reshape(&h, &[n, shape[0], shape[1], shape[2]])?,
                Block::Permute(p) => p.inverse(ctx, &h)?,
            };
        }
        Ok(h)
    }

    /// Untracked forward pass in eval mode: `(z, logdet)` for images `x` given `fbp`.
    pub fn encode(&self, x: &Tensor<T>, fbp: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let tape = Tape::inference();
        let vars = self.store.bind(&tape);
        let ctx = Ctx::new(&tape, &self.store, &vars, Mode::Eval);
        let f = self.condition_features(&ctx, &Var::constant(fbp.clone()))?;
        let out = self.forward(&ctx, &Var::constant(x.clone()), &f)?;
        Ok((out.z.into_tensor(), out.logdet.into_tensor()))
    }

    /// Untracked inverse pass in eval mode.
    pub fn decode(&self, z: &Tensor<T>, fbp: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::inference();
        let vars = self.store.bind(&tape);
        let ctx = Ctx::new(&tape, &self.store, &vars, Mode::Eval);
        let f = self.condition_features(&ctx, &Var::constant(fbp.clone()))?;
        Ok(self.inverse(&ctx, &Var::constant(z.clone()), &f)?.into_tensor())
    }

    /// Conditioning features computed once, reusable across many [`decode_with`](Self::decode_with) calls.
    pub fn features(&self, fbp: &Tensor<T>) -> Result<Features<T>> {
        let tape = Tape::inference();
        let vars = self.store.bind(&tape);
        let ctx = Ctx::new(&tape, &self.store, &vars, Mode::Eval);
        self.condition_features(&ctx, &Var::constant(fbp.clone()))
    }

    pub fn decode_with(&self, z: &Tensor<T>, features: &Features<T>) -> Result<Tensor<T>> {
        let tape = Tape::inference();
        let vars = self.store.bind(&tape);
        let ctx = Ctx::new(&tape, &self.store, &vars, Mode::Eval);
        Ok(self.inverse(&ctx, &Var::constant(z.clone()), features)?.into_tensor())
    }
}
