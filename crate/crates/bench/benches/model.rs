use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nast_core::data::{synth_generate, SynthConfig, SynthTask};
use nast_core::stream::{offline_decode, stream_translate, CollapseMode};
use nast_core::train::{TrainConfig, Trainer};
use nast_core::{ModelConfig, NastModel, TokenId};

fn model() -> NastModel<f32> {
    NastModel::new(ModelConfig::default(), 1).unwrap()
}

fn source(n: usize) -> Vec<TokenId> {
    (0..n).map(|i| 3 + (i * 7 % 30) as TokenId).collect()
}

fn inference(c: &mut Criterion) {
    let m = model();
    let mut group = c.benchmark_group("inference");
    for n in [10, 20, 40] {
        let src = source(n);
        group.bench_with_input(BenchmarkId::new("offline", n), &src, |b, src| {
            b.iter(|| offline_decode(&m, black_box(src), 0, CollapseMode::Exact).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("streaming", n), &src, |b, src| {
            b.iter(|| stream_translate(&m, black_box(src), 0, CollapseMode::Exact).unwrap())
        });
    }
    group.finish();
}

fn training(c: &mut Criterion) {
    let (vocab, corpus) = synth_generate(&SynthConfig {
        task: SynthTask::Copy,
        n: 200,
        min_len: 5,
        max_len: 20,
        vocab_size: 32,
        seed: 1,
    })
    .unwrap();
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        ..Default::default()
    };
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    for stage in [1u8, 2] {
        let tcfg = TrainConfig {
            stage,
            batch_tokens: 256,
            ..Default::default()
        };
        let mut trainer = Trainer::new(NastModel::new(cfg.clone(), 1).unwrap(), tcfg).unwrap();
        let batches = trainer.make_batches(&corpus);
        let mut i = 0;
        group.bench_function(BenchmarkId::new("step", stage), |b| {
            b.iter(|| {
                i = (i + 1) % batches.len();
                trainer.train_step(&corpus, &batches[i]).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, inference, training);
criterion_main!(benches);
