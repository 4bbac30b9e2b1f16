use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use posekit_bench::{grid_frame, quads};
use posekit_core::pose::fuse_normals;
use posekit_core::{solve_pose, NormalFusion, SmoothedNormal, SolverConfig};

fn full_pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_pose");
    for side in [2, 4, 8, 12] {
        let frame = grid_frame(side, 0.5, 7);
        for fusion in NormalFusion::ALL {
            let cfg = SolverConfig { normal_fusion: fusion, ..SolverConfig::default() };
            group.bench_with_input(BenchmarkId::new(fusion.name(), side * side), &frame, |b, f| {
                b.iter(|| solve_pose(black_box(f), &cfg, None))
            });
        }
    }
    group.finish();
}

fn fusion_only(c: &mut Criterion) {
    let mut group = c.benchmark_group("fuse_normals");
    let frame = grid_frame(8, 0.5, 8);
    for m in [1, 5, 20, 80] {
        let qs = quads(&frame, m);
        for fusion in NormalFusion::ALL {
            group.bench_with_input(BenchmarkId::new(fusion.name(), m), &qs, |b, q| {
                let mut session = SmoothedNormal::new();
                b.iter(|| fuse_normals(black_box(q), fusion, Some(&mut session)))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, full_pipeline, fusion_only);
criterion_main!(benches);
