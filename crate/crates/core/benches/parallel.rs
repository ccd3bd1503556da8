//! Single-thread versus default rayon pool on the data-parallel hot paths.
//!
//! Built with `--no-default-features`, the library ignores the pool and every
//! group measures the sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use radeval_core::analysis::{null_rejection_rate, TestVariant};
use radeval_core::clustering::{select_k, MeshVectorMatrix};
use radeval_core::encoder::ToyEncoder;
use radeval_core::estimator::{encode_features, TrainingExample};
use radeval_core::pairgen::score_cluster_pairs;
use radeval_core::simscore::{bleu, BleuOptions};
use radeval_core::ScoreKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pools() -> Vec<(&'static str, rayon::ThreadPool)> {
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let all = rayon::ThreadPoolBuilder::new().build().unwrap();
    vec![("1-thread", one), ("default", all)]
}

fn sentences(n: usize, seed: u64) -> Vec<String> {
    let words = [
        "heart", "size", "normal", "lungs", "clear", "no", "effusion", "pleural", "opacity", "left", "right", "base",
        "mild", "cardiomegaly", "granuloma", "calcified", "atelectasis", "stable", "pneumothorax", "spine",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..rng.random_range(8..30))
                .map(|_| words[rng.random_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect()
}

fn blobs(n: usize) -> MeshVectorMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let c = (i % 6) as f64 * 3.0;
            (0..16).map(|d| if d % 6 == i % 6 { c } else { 0.0 } + rng.random_range(-0.5..0.5)).collect()
        })
        .collect();
    MeshVectorMatrix::from_rows(&rows).unwrap()
}

fn bench(c: &mut Criterion) {
    let texts = sentences(120, 3);
    let ids: Vec<String> = (0..texts.len()).map(|i| format!("r{i}")).collect();
    let matrix = blobs(600);
    let examples: Vec<TrainingExample> = texts
        .iter()
        .zip(texts.iter().rev())
        .map(|(a, b)| TrainingExample {
            src: a.clone(),
            mt: b.clone(),
            score: 0.0,
        })
        .collect();
    let encoder = ToyEncoder::default();

    let mut group = c.benchmark_group("pair_scoring_bleu2");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                pool.install(|| {
                    score_cluster_pairs(0, &ids, ScoreKind::RadgraphF1, |i, j| {
                        bleu(&texts[j], &texts[i], 2, BleuOptions::default())
                    })
                })
            })
        });
    }
    group.finish();

    let mut group = c.benchmark_group("select_k_2_to_8");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| select_k(&matrix, 2..=8, 7).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("null_calibration_2000");
    group.sample_size(10);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| null_rejection_rate(0.7, 0.8, 50, 0.05, 2000, 11, TestVariant::OlkinZ).unwrap()))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("feature_encoding");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| encode_features(&examples, &encoder, Default::default()).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
