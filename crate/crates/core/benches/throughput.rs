//! Restoration and loss throughput at 256x256.
//!
//! With the default `parallel` feature each case runs on the global rayon
//! pool and on a single-thread pool. Build with `--no-default-features` to
//! time the sequential code path.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uwimg_core::imaging::synthesize_improved;
use uwimg_core::losses::evaluate;
use uwimg_core::restoration::{
    analytic_invert, equalize_hist, gray_world_balance, invert_by_gradient_descent, InversionConfig,
};
use uwimg_core::{DepthMap, Image, LossKind, LossSpec, WaterType};

const SIZE: usize = 256;

struct Fixture {
    clear: Image,
    observed: Image,
    depth: DepthMap,
}

fn fixture() -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let clear = Image::from_fn(SIZE, SIZE, |x, y, c| {
        0.3 + 0.2 * (0.05 * x as f64 + 0.07 * y as f64 + c as f64).sin() + 0.05 * rng.gen_range(-1.0..1.0)
    })
    .unwrap();
    let depth = DepthMap::from_fn(SIZE, SIZE, |x, y| 1.0 + (x + y) as f64 / SIZE as f64).unwrap();
    let observed = synthesize_improved(&clear, &depth, &WaterType::CoastalGreen.nominal()).unwrap();
    Fixture { clear, observed, depth }
}

fn on<T: Send>(pool: Option<&rayon::ThreadPool>, f: impl FnOnce() -> T + Send) -> T {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

fn cases(c: &mut Criterion, label: &str, pool: Option<&rayon::ThreadPool>) {
    let f = fixture();
    let params = WaterType::CoastalGreen.nominal();
    let mut group = c.benchmark_group(format!("{SIZE}x{SIZE}"));
    group.sample_size(10);

    group.bench_function(BenchmarkId::new("he", label), |b| {
        b.iter(|| on(pool, || black_box(equalize_hist(&f.observed))))
    });
    group.bench_function(BenchmarkId::new("grayworld", label), |b| {
        b.iter(|| on(pool, || black_box(gray_world_balance(&f.observed).unwrap())))
    });
    let cfg = InversionConfig::default();
    group.bench_function(BenchmarkId::new("analytic", label), |b| {
        b.iter(|| on(pool, || black_box(analytic_invert(&f.observed, &f.depth, &params, &cfg).unwrap())))
    });
    let spec = LossSpec::new(LossKind::Ssim);
    group.bench_function(BenchmarkId::new("ssim_loss", label), |b| {
        b.iter(|| on(pool, || black_box(evaluate(&spec, &f.clear, &f.observed).unwrap())))
    });
    let gd = InversionConfig {
        max_iters: 10,
        ..InversionConfig::with_loss(LossSpec::new(LossKind::L2))
    };
    group.bench_function(BenchmarkId::new("descent_l2_10it", label), |b| {
        b.iter(|| on(pool, || black_box(invert_by_gradient_descent(&f.observed, &f.depth, &params, &gd).unwrap())))
    });
    group.finish();
}

#[cfg(feature = "parallel")]
fn throughput(c: &mut Criterion) {
    cases(c, "parallel", None);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    cases(c, "single_thread_pool", Some(&single));
}

#[cfg(not(feature = "parallel"))]
fn throughput(c: &mut Criterion) {
    cases(c, "sequential", None);
}

criterion_group!(benches, throughput);
criterion_main!(benches);
