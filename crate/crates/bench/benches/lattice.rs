use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nast_core::lattice::{
    collapse, ctc_log_prob_grad, expected_al_grad, nmla_loss_grad, viterbi_alignment, AlignmentPosterior, PosteriorMeta,
};
use nast_core::verify::sample_alignment;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn posterior(src_len: usize, lambda: usize, vocab: usize) -> AlignmentPosterior {
    let mut rng = ChaCha8Rng::seed_from_u64(src_len as u64);
    let logits: Vec<f64> = (0..src_len * lambda * vocab).map(|_| rng.gen_range(-3.0..3.0)).collect();
    AlignmentPosterior::from_logits(&logits, vocab, PosteriorMeta { lambda, k: 0, src_len }).unwrap()
}

fn lattice(c: &mut Criterion) {
    let mut group = c.benchmark_group("lattice");
    for src_len in [10, 30, 60] {
        let p = posterior(src_len, 3, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = loop {
            let y = collapse(&sample_alignment(&mut rng, &p));
            if y.len() >= 2 {
                break y;
            }
        };
        group.bench_with_input(BenchmarkId::new("ctc_grad", src_len), &p, |b, p| {
            b.iter(|| ctc_log_prob_grad(black_box(&y), p).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("nmla_grad", src_len), &p, |b, p| {
            b.iter(|| nmla_loss_grad(black_box(&y), p).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("expected_al_grad", src_len), &p, |b, p| {
            b.iter(|| expected_al_grad(black_box(p)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("viterbi", src_len), &p, |b, p| {
            b.iter(|| viterbi_alignment(black_box(&y), p).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, lattice);
criterion_main!(benches);
