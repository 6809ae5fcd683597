//! Frame capture over seeded point clouds: rayon against the sequential loop.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use meshslam::*;
use nalgebra::Vector3;

fn capture(c: &mut Criterion) {
    let intrinsics = CameraIntrinsics::default();
    let cfg = CaptureConfig::default();
    let pose = RigidPose::look_at(Vector3::new(0.0, 2.0, 20.0), Vector3::zeros(), Vector3::y()).unwrap();
    let mut group = c.benchmark_group("capture_frame");
    group.sample_size(20);
    for count in [600usize, 60_000, 240_000, 480_000] {
        let mesh = generate_scene(&SceneSpec::new(SceneKind::SeededPointCloud { count, extent: 10.0 }).with_seed(1))
            .unwrap();
        group.throughput(Throughput::Elements(count as u64));
        group.bench_with_input(BenchmarkId::new("parallel", count), &mesh, |b, m| {
            b.iter(|| capture_frame(m, &pose, &intrinsics, &cfg, 0, 0.0))
        });
        group.bench_with_input(BenchmarkId::new("sequential", count), &mesh, |b, m| {
            b.iter(|| capture_frame_sequential(m, &pose, &intrinsics, &cfg, 0, 0.0))
        });
    }
    group.finish();
}

criterion_group!(benches, capture);
criterion_main!(benches);
