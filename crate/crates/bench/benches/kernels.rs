use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use harmgrad::calculus::{gradient, laplacian};
use harmgrad::green::green_dirichlet;
use harmgrad::harmonic::HarmonicFn;
use harmgrad::jet::Jet;
use harmgrad::qls::{plant_tensors, solve_forward, BoundaryData, SolverSettings};
use harmgrad::stationary::{lj_general, phase_profile};
use harmgrad::Grid;
use harmgrad_bench::smooth_field;
use num_complex::Complex64;

fn grid_kernels(c: &mut Criterion) {
    let mut g = c.benchmark_group("grid");
    for n in [24, 48] {
        let f = smooth_field(n);
        g.bench_with_input(BenchmarkId::new("gradient", n), &f, |b, f| {
            b.iter(|| gradient(f).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("laplacian", n), &f, |b, f| {
            b.iter(|| laplacian(f).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("green_dirichlet", n), &f, |b, f| {
            b.iter(|| green_dirichlet(f).unwrap())
        });
    }
    g.finish();
}

fn jets(c: &mut Criterion) {
    let f2 = phase_profile(1.0, 0.5, 12).unwrap().f2;
    let u = Jet::new(
        (0..=12)
            .map(|k| Complex64::new(1.0 / (k + 1) as f64, 0.1))
            .collect(),
        12,
    );
    c.bench_function("lj_general_j2", |b| {
        b.iter(|| lj_general(&f2, &u, 2).unwrap())
    });
}

fn forward(c: &mut Criterion) {
    let grid = Grid::cube(3, -1.0, 1.0, 24).unwrap();
    let a = plant_tensors(&grid, 1.0, 1).unwrap();
    let data = BoundaryData::new(HarmonicFn::coordinate(0), HarmonicFn::coordinate(1));
    let mut g = c.benchmark_group("qls");
    g.sample_size(10);
    g.bench_function("solve_forward_24", |b| {
        b.iter(|| solve_forward(&a, &data, 1e-2, &SolverSettings::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, grid_kernels, jets, forward);
criterion_main!(benches);
