use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ctflow::flow::{ArchConfig, FlowModel};
use ctflow::grad::{Tape, Var};
use ctflow::tomo::{fbp_reconstruct, radon_forward, Geometry};
use ctflow::train::loss_and_grads;
use ctflow_bench::{image_batch, phantom, uniform};

fn tomography(c: &mut Criterion) {
    let g = Geometry::default();
    let img = phantom(g.image_size);
    let sino = radon_forward(&img, &g).unwrap();
    c.bench_function("radon_forward 64x64, 90 angles", |b| b.iter(|| radon_forward(black_box(&img), &g).unwrap()));
    c.bench_function("fbp 64x64, 90 angles", |b| b.iter(|| fbp_reconstruct(black_box(&sino), &g).unwrap()));
}

fn conv(c: &mut Criterion) {
    let x = Var::constant(uniform::<f32>(&[10, 16, 32, 32], 1));
    let w = Var::constant(uniform::<f32>(&[32, 16, 3, 3], 2));
    c.bench_function("conv2d 10x16x32x32 -> 32, k3", |b| {
        b.iter(|| Tape::inference().conv2d(black_box(&x), &w, None, 1, 1).unwrap())
    });
}

fn flow(c: &mut Criterion) {
    let model = FlowModel::<f32>::new(ArchConfig::default(), 0).unwrap();
    let x = image_batch::<f32>(10, 64);
    let fbp = image_batch::<f32>(10, 64);
    let mut g = c.benchmark_group("desk flow, batch 10");
    g.sample_size(10);
    g.bench_function("encode", |b| b.iter(|| model.encode(black_box(&x), &fbp).unwrap()));
    g.bench_function("loss and gradients", |b| b.iter(|| loss_and_grads(&model, black_box(&x), &fbp).unwrap()));
    g.finish();
}

criterion_group!(benches, tomography, conv, flow);
criterion_main!(benches);
