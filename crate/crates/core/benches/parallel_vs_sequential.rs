//! Run once per build to compare the two:
//!
//!     cargo bench -p bulksurf-core --bench parallel_vs_sequential
//!     cargo bench -p bulksurf-core --bench parallel_vs_sequential --no-default-features
//!
//! Benchmark ids carry the build mode, so both sets land side by side in the
//! criterion report.

use std::hint::black_box;

use bulksurf_core::diskfem::{assemble, gen_disk_mesh};
use bulksurf_core::graphs::PotentialPair;
use bulksurf_core::stepper::{ProblemData, SchemeParams, SchemeState, StepSolver};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const MODE: &str = if cfg!(feature = "parallel") { "parallel" } else { "sequential" };

fn bench(c: &mut Criterion) {
    let mesh = gen_disk_mesh(40, 160).unwrap();
    let mut group = c.benchmark_group("desk_mesh");
    group.sample_size(20);

    group.bench_function(BenchmarkId::new("assemble", MODE), |b| b.iter(|| assemble(black_box(&mesh)).unwrap()));

    let ops = assemble(&mesh).unwrap();
    let phi0: Vec<f64> = ops.mesh.vertices.iter().map(|p| 0.5 * (-4.0 * (p[0] * p[0] + p[1] * p[1])).exp() + 0.2 * p[0]).collect();
    let pair = PotentialPair::double_obstacle(1.0).unwrap();
    let data = ProblemData::from_bulk(&ops, phi0, pair);
    let params = SchemeParams::new(1e-3, 1e-3, 0.1, 0.1, 0.1);
    let start = SchemeState::initial(&data);
    let mut solver = StepSolver::new(&ops, &params).unwrap();
    group.bench_function(BenchmarkId::new("newton_step", MODE), |b| {
        b.iter(|| solver.step(&ops, &data, black_box(&start)).unwrap())
    });

    let v: Vec<f64> = ops.mesh.vertices.iter().map(|p| p[0] * p[1]).collect();
    group.bench_function(BenchmarkId::new("dual_norm", MODE), |b| b.iter(|| ops.dual_norm_bulk(black_box(&v)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
