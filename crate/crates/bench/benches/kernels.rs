use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fckit::metrics::{ccc, PairedSeries};
use fckit::ops::{conv2d, conv2d_backward, maxpool2};
use fckit::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn bench_conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("conv2d");
    group.sample_size(10);
    // First and last blocks of the trunk.
    for (side, cin, cout) in [(120, 16, 16), (15, 80, 80)] {
        let x = random(&mut rng, &[4, side, side, cin]);
        let k = random(&mut rng, &[3, 3, cin, cout]);
        let b = Tensor::zeros(&[cout]);
        let g = random(&mut rng, &[4, side, side, cout]);
        let id = format!("{side}x{side}x{cin}->{cout}");
        group.bench_function(BenchmarkId::new("forward", &id), |bch| bch.iter(|| conv2d(&x, &k, &b).unwrap()));
        group.bench_function(BenchmarkId::new("backward", &id), |bch| bch.iter(|| conv2d_backward(&x, &k, &g, true).unwrap()));
    }
    group.finish();
}

fn bench_pool(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[4, 120, 120, 16]);
    c.bench_function("maxpool2 4x120x120x16", |b| b.iter(|| maxpool2(&x).unwrap()));
}

fn bench_ccc(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x: Vec<f64> = (0..100_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.7 * v + rng.gen_range(-0.3..0.3)).collect();
    c.bench_function("ccc 100k", |b| b.iter(|| ccc(&PairedSeries::new(&x, &y).unwrap())));
}

criterion_group!(benches, bench_conv, bench_pool, bench_ccc);
criterion_main!(benches);
