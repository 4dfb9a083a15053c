use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ordemb_core::experiment::init_embedding;
use ordemb_core::losses::full_gradient;
use ordemb_core::optimizer::{run, OptimizerConfig};
use ordemb_core::synth::{enumerate_triplets, generate_points, split};
use ordemb_core::{ComparisonSet, EmbeddingMatrix, LossKind, LossModel, SynthConfig};

fn problem() -> (EmbeddingMatrix, ComparisonSet, EmbeddingMatrix) {
    let cfg = SynthConfig::default();
    let truth = generate_points(&cfg).unwrap();
    let (train, _) = split(&enumerate_triplets(&truth).comparisons, cfg.num_train, 1).unwrap();
    let x0 = init_embedding(cfg.n, 10, 2, 0.1).unwrap();
    (truth, train, x0)
}

fn bench_full_gradient(c: &mut Criterion) {
    let (_, train, x0) = problem();
    let mut group = c.benchmark_group("full_gradient");
    for kind in LossKind::ALL {
        let model = LossModel::new(kind, 10);
        group.bench_function(kind.as_str(), |b| b.iter(|| full_gradient(&model, black_box(&x0), &train).unwrap()));
    }
    group.finish();
}

fn bench_svrg_epoch(c: &mut Criterion) {
    let (_, train, x0) = problem();
    let model = LossModel::new(LossKind::Ste, 10);
    let cfg = OptimizerConfig { epochs: 1, ..Default::default() };
    let mut group = c.benchmark_group("svrg_sbb");
    group.sample_size(20);
    group.bench_function("one_epoch_n100_N10000", |b| {
        b.iter_batched(|| x0.clone(), |x| run(&model, &train, None, &x, &cfg).unwrap(), BatchSize::SmallInput)
    });
    group.finish();
}

fn bench_enumerate(c: &mut Criterion) {
    let (truth, _, _) = problem();
    c.bench_function("enumerate_triplets_n100", |b| b.iter(|| enumerate_triplets(black_box(&truth))));
}

criterion_group!(benches, bench_full_gradient, bench_svrg_epoch, bench_enumerate);
criterion_main!(benches);
