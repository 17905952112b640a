use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hda_core::camera::{CameraModel, Pose};
use hda_core::montecarlo::{sweep, McConfig};
use hda_core::scene::{render, SceneSpec};
use nalgebra::Vector3;

fn pools() -> Vec<(usize, rayon::ThreadPool)> {
    let all = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut sizes = vec![1, all];
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| (n, rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()))
        .collect()
}

fn bench_render(c: &mut Criterion) {
    let scene = SceneSpec {
        size_px: 513,
        ..SceneSpec::lunar_default(1)
    }
    .build()
    .unwrap();
    let cam = CameraModel::centered(3600.0, 512, 512).unwrap();
    let pose = Pose::look_at(Vector3::new(-400.0, 0.0, 400.0), Vector3::zeros(), Vector3::z());
    let mut g = c.benchmark_group("render_512");
    g.sample_size(10);
    for (n, pool) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| pool.install(|| render(&scene, &cam, &pose)))
        });
    }
    g.finish();
}

fn bench_mc(c: &mut Criterion) {
    let cfg = McConfig {
        baselines_m: vec![10.0, 30.0],
        pixel_noise_px: vec![0.5],
        n_trials: 200,
        ..Default::default()
    };
    let mut g = c.benchmark_group("mc_sweep");
    g.sample_size(10);
    for (n, pool) in pools() {
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| pool.install(|| sweep(&cfg).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_render, bench_mc);
criterion_main!(benches);
