//! Compares the rayon data-parallel paths against their sequential twins on
//! the two batch-heavy workloads: decoding latent batches and building
//! kernel matrices. Build with `--no-default-features` to measure the
//! sequential-only configuration of the public API.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use graspvae::dim_estimator::{kernel_matrix, kernel_matrix_seq, Kernel};
use graspvae::grasp_data::{NormalizationStats, TabletopPlane};
use graspvae::hgg_vae::{build_hgg, HggArchitecture};
use graspvae::latent_explorer::{decode_latents, decode_latents_seq};

fn bench_decode(c: &mut Criterion) {
    let stats = NormalizationStats {
        position_min: [-0.1, -0.1, 0.0],
        position_max: [0.1, 0.1, 0.2],
        spread_min: 0.4,
        spread_max: 0.6,
    };
    let model = build_hgg(&HggArchitecture::default(), &stats, 0).unwrap();
    let plane = TabletopPlane::new([0.0, 0.0, 1.0, 0.0]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let mut group = c.benchmark_group("decode_latents");
    for batch in [256usize, 4096] {
        let latents: Vec<Vec<f64>> = (0..batch)
            .map(|_| (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        group.bench_with_input(BenchmarkId::new("parallel", batch), &latents, |b, l| {
            b.iter(|| decode_latents(&model, l, &plane).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", batch), &latents, |b, l| {
            b.iter(|| decode_latents_seq(&model, l, &plane).unwrap())
        });
    }
    group.finish();
}

fn bench_kernel_matrix(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("kernel_matrix");
    for n in [128usize, 512] {
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        group.bench_with_input(BenchmarkId::new("parallel", n), &points, |b, p| {
            b.iter(|| kernel_matrix(p, Kernel::Rbf, 0.7))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &points, |b, p| {
            b.iter(|| kernel_matrix_seq(p, Kernel::Rbf, 0.7))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_decode, bench_kernel_matrix);
criterion_main!(benches);
