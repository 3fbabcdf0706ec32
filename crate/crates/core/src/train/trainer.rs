use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use super::{adam_step, nll_loss, TrainConfig};
use crate::error::{config_err, Error, Result};
use crate::flow::layers::{apply_bn_updates, BnUpdates};
use crate::flow::{ArchConfig, Ctx, FlowModel, Mode};
use crate::grad::{Real, Tape, Tensor, Var};
use crate::rng::{derive_seed, stream_rng};
use crate::tomo::{DataPair, Dataset, Image};

/// Seed-index reserved for model initialization.
const INIT_INDEX: u64 = u64::MAX;
/// RNG stream used for epoch shuffles.
const SHUFFLE_STREAM: u64 = 1;

pub const LOSS_HEADER: &str = "step,nll,grad_norm,seconds";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub step: usize,
    pub nll: f64,
    pub grad_norm: f64,
    pub seconds: f64,
}

impl LossRecord {
    pub fn csv_line(&self) -> String {
        format!("{},{:.6},{:.6},{:.3}", self.step, self.nll, self.grad_norm, self.seconds)
    }
}

/// `[N, 1, S, S]` tensor from images.
pub fn images_tensor<T: Real>(images: &[&Image]) -> Result<Tensor<T>> {
    let s = images.first().map_or(0, |i| i.size());
    if images.iter().any(|i| i.size() != s) {
        return Err(Error::Dimension("images of different sizes in one batch".into()));
    }
    let data = images.iter().flat_map(|i| i.data().iter().map(|&v| T::of(v))).collect();
    Tensor::new(&[images.len(), 1, s, s], data)
}

/// `(reference, fbp)` batch tensors for the given pair indices.
pub fn batch_tensors<T: Real>(pairs: &[DataPair], idx: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
    let refs: Vec<&Image> = idx.iter().map(|&i| &pairs[i].reference).collect();
    let fbps: Vec<&Image> = idx.iter().map(|&i| &pairs[i].fbp).collect();
    Ok((images_tensor(&refs)?, images_tensor(&fbps)?))
}

/// Epoch-wise shuffled batches without replacement; the incomplete tail of an epoch is dropped.
pub struct BatchSampler {
    seed: u64,
    len: usize,
    epoch: u64,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    pub fn new(seed: u64, len: usize) -> Self {
        Self { seed, len, epoch: 0, order: Vec::new(), pos: 0 }
    }

    pub fn next_batch(&mut self, batch: usize) -> Vec<usize> {
        assert!(batch <= self.len, "batch larger than dataset");
        if self.order.is_empty() || self.pos + batch > self.len {
            self.order = (0..self.len).collect();
            self.order.shuffle(&mut stream_rng(self.seed, self.epoch, SHUFFLE_STREAM));
            self.epoch += 1;
            self.pos = 0;
        }
        let b = self.order[self.pos..self.pos + batch].to_vec();
        self.pos += batch;
        b
    }
}

/// Freshly initialized model for a training run.
pub fn init_identity<T: Real>(arch: ArchConfig, seed: u64) -> Result<FlowModel<T>> {
    FlowModel::new(arch, derive_seed(seed, INIT_INDEX))
}

/// Mean NLL of a batch; `Mode::Train` uses batch statistics without touching running ones.
pub fn batch_nll<T: Real>(model: &FlowModel<T>, x: &Tensor<T>, fbp: &Tensor<T>, mode: Mode) -> Result<f64> {
    let tape = Tape::inference();
    let vars = model.store.bind(&tape);
    let ctx = Ctx::new(&tape, &model.store, &vars, mode);
    let f = model.condition_features(&ctx, &Var::constant(fbp.clone()))?;
    let out = model.forward(&ctx, &Var::constant(x.clone()), &f)?;
    Ok(nll_loss(&tape, &out.z, &out.logdet)?.value().data()[0].f64())
}

/// Loss and per-parameter gradients of one batch, plus the batch-norm running-stat updates.
pub fn loss_and_grads<T: Real>(
    model: &FlowModel<T>,
    x: &Tensor<T>,
    fbp: &Tensor<T>,
) -> Result<(f64, Vec<Tensor<T>>, BnUpdates<T>)> {
    let tape = Tape::new();
    let vars = model.store.bind(&tape);
    let (loss, bn) = {
        let ctx = Ctx::new(&tape, &model.store, &vars, Mode::Train);
        let f = model.condition_features(&ctx, &Var::constant(fbp.clone()))?;
        let out = model.forward(&ctx, &Var::constant(x.clone()), &f)?;
        (nll_loss(&tape, &out.z, &out.logdet)?, ctx.take_bn_updates())
    };
    let nll = loss.value().data()[0].f64();
    let mut grads = tape.backward(&loss)?;
    Ok((nll, vars.gradients(&mut grads), bn))
}

/// One optimizer step. Returns `(nll, grad_norm)`; the model is left unchanged on error.
pub fn train_step<T: Real>(
    model: &mut FlowModel<T>,
    x: &Tensor<T>,
    fbp: &Tensor<T>,
    cfg: &TrainConfig,
    step: usize,
) -> Result<(f64, f64)> {
    let (nll, grads, bn) = loss_and_grads(model, x, fbp)?;
    if !nll.is_finite() {
        return Err(Error::NonFinite(format!("loss at step {step}")));
    }
    if let Some(p) = grads.iter().zip(model.store.iter()).find(|(g, _)| !g.all_finite()).map(|(_, p)| &p.name) {
        return Err(Error::NonFinite(format!("gradient of {p} at step {step}")));
    }
    let norm = adam_step(&mut model.store, &grads, cfg, step);
    apply_bn_updates(&mut model.store, bn);
    Ok((nll, norm))
}

#[derive(Clone, Debug)]
pub struct TrainOutput<T: Real> {
    pub model: FlowModel<T>,
    pub records: Vec<LossRecord>,
    pub checkpoint: PathBuf,
}

/// Output file names inside a training directory.
pub fn loss_log_path(dir: &Path) -> PathBuf {
    dir.join("loss.csv")
}

pub fn final_checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("model.ctck")
}

pub fn periodic_checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("checkpoint.ctck")
}

fn save_atomic<T: Real>(model: &FlowModel<T>, data: &Dataset, path: &Path) -> Result<()> {
    let tmp = path.with_extension("ctck.tmp");
    model.save(&tmp, Some(data.header.geometry))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Maximum-likelihood training on `data`, writing `loss.csv`, `checkpoint.ctck` at the
/// configured cadence and `model.ctck` at the end into `out_dir`.
///
/// A non-finite loss or gradient aborts the run; the last periodic checkpoint is kept.
pub fn train<T: Real>(
    data: &Dataset,
    arch: ArchConfig,
    cfg: &TrainConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&LossRecord),
) -> Result<TrainOutput<T>> {
    cfg.validate()?;
    arch.validate()?;
    let g = data.header.geometry;
    if arch.image_size != g.image_size {
        return Err(config_err!("arch image_size {} does not match the dataset's {}", arch.image_size, g.image_size));
    }
    if data.pairs.len() < cfg.batch_size {
        return Err(config_err!("dataset has {} pairs, fewer than batch_size {}", data.pairs.len(), cfg.batch_size));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = loss_log_path(out_dir);
    let mut log = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    writeln!(log, "{LOSS_HEADER}").map_err(|e| Error::io(&log_path, e))?;

    let mut model = init_identity::<T>(arch, cfg.seed)?;
    let mut sampler = BatchSampler::new(cfg.seed, data.pairs.len());
    let mut records = Vec::with_capacity(cfg.steps);
    let start = Instant::now();
    for step in 1..=cfg.steps {
        let idx = sampler.next_batch(cfg.batch_size);
        let (x, fbp) = batch_tensors::<T>(&data.pairs, &idx)?;
        let (nll, grad_norm) = train_step(&mut model, &x, &fbp, cfg, step)?;
        let rec = LossRecord { step, nll, grad_norm, seconds: start.elapsed().as_secs_f64() };
        writeln!(log, "{}", rec.csv_line()).map_err(|e| Error::io(&log_path, e))?;
        progress(&rec);
        records.push(rec);
        if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
            save_atomic(&model, data, &periodic_checkpoint_path(out_dir))?;
        }
    }
    log.flush().map_err(|e| Error::io(&log_path, e))?;
    let checkpoint = final_checkpoint_path(out_dir);
    save_atomic(&model, data, &checkpoint)?;
    Ok(TrainOutput { model, records, checkpoint })
}
