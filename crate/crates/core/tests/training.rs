//! Training loop: identity at initialization, determinism, descent and checkpoints.

mod common;

use common::{randn, rng};
use ctflow::flow::{ArchConfig, FlowModel, Mode};
use ctflow::grad::Tensor;
use ctflow::tomo::{build_pair, Dataset, DatasetConfig, Geometry};
use ctflow::train::{batch_nll, batch_tensors, init_identity, train, TrainConfig, LOSS_HEADER};

const INIT_NLL_TOL: f64 = 1e-4;

fn small_arch() -> ArchConfig {
    ArchConfig { image_size: 16, ..ArchConfig::miniature() }
}

fn small_data(count: usize, seed: u64) -> Dataset {
    let cfg = DatasetConfig {
        count,
        seed,
        geometry: Geometry::new(24, 25, 1.0 / 16.0, 16, 1.0 / 16.0).unwrap(),
        ..DatasetConfig::default()
    };
    Dataset { header: cfg.header(), pairs: (0..count as u64).map(|i| build_pair(&cfg, i).unwrap()).collect() }
}

fn cfg(steps: usize, batch_size: usize) -> TrainConfig {
    TrainConfig { steps, batch_size, checkpoint_every: 0, seed: 3, ..TrainConfig::default() }
}

fn sq_norms(t: &Tensor<f64>) -> f64 {
    let n = t.shape()[0];
    t.data().iter().map(|v| v * v).sum::<f64>() / n as f64
}

#[test]
fn fresh_model_is_an_isometry_with_zero_logdet() {
    for arch in [ArchConfig::miniature(), ArchConfig::default()] {
        let model = init_identity::<f64>(arch.clone(), 0).unwrap();
        let mut r = rng(60);
        let s = arch.image_size;
        let x = randn(&mut r, &[2, 1, s, s], 1.0);
        let fbp = randn(&mut r, &[2, 1, s, s], 1.0);
        let tape = ctflow::grad::Tape::inference();
        let vars = model.store.bind(&tape);
        let ctx = ctflow::flow::Ctx::new(&tape, &model.store, &vars, Mode::Eval);
        let f = model.condition_features(&ctx, &ctflow::grad::Var::constant(fbp.clone())).unwrap();
        let out = model.forward(&ctx, &ctflow::grad::Var::constant(x.clone()), &f).unwrap();
        for (i, (name, ld)) in out.block_logdets.iter().enumerate() {
            assert!(ld.value().data().iter().all(|v| v.abs() < 1e-9), "block {i} ({name}): {:?}", ld.value().data());
        }
        let expected = sq_norms(&x) / 2.0;
        let nll = batch_nll(&model, &x, &fbp, Mode::Eval).unwrap();
        assert!((nll - expected).abs() / expected < INIT_NLL_TOL, "{nll} vs {expected}");
        assert!((sq_norms(out.z.value()) / 2.0 - expected).abs() / expected < INIT_NLL_TOL);
    }
}

#[test]
fn one_step_run_writes_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(4, 1);
    let out = train::<f32>(&data, small_arch(), &cfg(1, 2), dir.path(), |_| {}).unwrap();
    let log = std::fs::read_to_string(dir.path().join("loss.csv")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], LOSS_HEADER);
    assert_eq!(lines.len(), 2);
    let (loaded, block) = FlowModel::<f32>::load(&out.checkpoint).unwrap();
    assert_eq!(block.geometry, Some(data.header.geometry));
    assert_eq!(loaded.arch, small_arch());
    let (x, fbp) = batch_tensors::<f32>(&data.pairs, &[0, 1, 2, 3]).unwrap();
    let a = batch_nll(&out.model, &x, &fbp, Mode::Eval).unwrap();
    let b = batch_nll(&loaded, &x, &fbp, Mode::Eval).unwrap();
    assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
}

#[test]
fn seeded_runs_are_identical() {
    let data = small_data(6, 2);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        train::<f32>(&data, small_arch(), &cfg(5, 3), dir.path(), |_| {}).unwrap();
        std::fs::read(dir.path().join("model.ctck")).unwrap()
    };
    assert_eq!(run(), run());
    let dir = tempfile::tempdir().unwrap();
    let other = TrainConfig { seed: 4, ..cfg(5, 3) };
    train::<f32>(&data, small_arch(), &other, dir.path(), |_| {}).unwrap();
    assert_ne!(std::fs::read(dir.path().join("model.ctck")).unwrap(), run());
}

#[test]
fn overfits_a_small_batch() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(4, 3);
    let out = train::<f32>(&data, small_arch(), &cfg(300, 4), dir.path(), |_| {}).unwrap();
    let head: f64 = out.records[..20].iter().map(|r| r.nll).sum::<f64>() / 20.0;
    let tail: f64 = out.records[280..].iter().map(|r| r.nll).sum::<f64>() / 20.0;
    assert!(out.records.iter().all(|r| r.nll.is_finite()));
    assert!(tail < head - 100.0, "nll {head} -> {tail}");
}

#[test]
fn rejects_mismatched_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(2, 4);
    assert!(train::<f32>(&data, small_arch(), &cfg(1, 3), dir.path(), |_| {}).unwrap_err().is_config());
    assert!(train::<f32>(&data, ArchConfig::miniature(), &cfg(1, 2), dir.path(), |_| {}).unwrap_err().is_config());
}
