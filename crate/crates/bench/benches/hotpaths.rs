//! Benchmarks for the four training hot paths: the contrastive loss (fast
//! path and brute-force oracle), the stochastic view pipeline, a full
//! optimizer step, and the encoder forward pass.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::{Array2, Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use fundus_core::augment::{build_pretext_pipeline, PretextAugmentConfig};
use fundus_core::model::{
    build_model, Architecture, EncoderConfig, HeadConfig, ProjectionHeadConfig,
};
use fundus_core::objective::{nt_xent_loss, nt_xent_loss_oracle};
use fundus_core::optim::{LarsConfig, Optimizer, OptimizerConfig};

fn embeddings(rows: usize, dim: usize) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0..1.0))
}

fn bench_nt_xent(c: &mut Criterion) {
    let mut group = c.benchmark_group("nt_xent");
    for &rows in &[16usize, 64] {
        let z = embeddings(rows, 128);
        group.bench_function(format!("fast_{rows}x128"), |b| {
            b.iter(|| nt_xent_loss(black_box(&z), 0.5).expect("loss"))
        });
        group.bench_function(format!("oracle_{rows}x128"), |b| {
            b.iter(|| nt_xent_loss_oracle(black_box(&z), 0.5).expect("loss"))
        });
    }
    group.finish();
}

fn bench_augment(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let image = Array3::from_shape_fn((64, 64, 3), |_| rng.random_range(0.0..1.0));
    let pipeline = build_pretext_pipeline(&PretextAugmentConfig {
        output_size: (64, 64),
        ..Default::default()
    })
    .expect("pipeline");
    let mut seed = 0u64;
    c.bench_function("augment/pretext_view_64", |b| {
        b.iter(|| {
            seed = seed.wrapping_add(1);
            pipeline.apply(black_box(&image), seed).expect("view")
        })
    });
}

fn small_model() -> fundus_core::model::ModelBundle {
    build_model(
        EncoderConfig {
            architecture: Architecture::SmallCnn,
            input_size: (64, 64),
            feature_dim: 64,
        },
        HeadConfig::Projection(ProjectionHeadConfig::default()),
        3,
    )
    .expect("model")
}

fn bench_optimizer_step(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Array4::from_shape_fn((8, 3, 64, 64), |_| rng.random_range(0.0..1.0));
    let mut model = small_model();
    let z = model.forward(&x, true);
    let grad = nt_xent_loss(&z, 0.5).expect("loss").grad;
    model.backward(&grad);
    c.bench_function("optim/lars_step_small_cnn", |b| {
        b.iter_batched(
            || Optimizer::new(OptimizerConfig::Lars(LarsConfig::pretraining())).expect("optimizer"),
            |mut opt| opt.step(black_box(&mut model)).expect("step"),
            BatchSize::SmallInput,
        )
    });
}

fn bench_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array4::from_shape_fn((8, 3, 64, 64), |_| rng.random_range(0.0..1.0));
    let mut model = small_model();
    c.bench_function("model/small_cnn_forward_8x64", |b| {
        b.iter(|| black_box(model.forward(black_box(&x), false)))
    });
}

criterion_group!(
    benches,
    bench_nt_xent,
    bench_augment,
    bench_optimizer_step,
    bench_forward
);
criterion_main!(benches);
