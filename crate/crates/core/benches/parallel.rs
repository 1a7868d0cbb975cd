use std::f64::consts::TAU;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use znav::conjugate::{conjugate_sweep, HillSystem};
use znav::drift::{DriftKind, DriftSpec};
use znav::geometry::{Point, Surface};
use znav::hamiltonian::{CoZermelo, Problem};
use znav::integrals::{gauss_bonnet_report, QuadratureGrid};
use znav::ode::SolverOptions;
use znav::par::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn magnetic_torus() -> Problem {
    let form = DriftSpec::parse(DriftKind::OneForm, "0.2*cos(y)", "0.3*sin(x)").unwrap();
    Problem::CoZermelo(CoZermelo::new(Surface::flat_torus(), form).unwrap())
}

fn gauss_bonnet(c: &mut Criterion) {
    let p = magnetic_torus();
    let mut group = c.benchmark_group("gauss_bonnet_48");
    group.sample_size(10);
    for (name, exec) in MODES {
        let grid = QuadratureGrid::cubic(p.chart(), 48).unwrap().with_execution(exec);
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| gauss_bonnet_report(&p, &grid, 1e-6).unwrap())
        });
    }
    group.finish();
}

fn conjugate_scan(c: &mut Criterion) {
    let p = Problem::CoZermelo(CoZermelo::riemannian(Surface::sphere(1.0).unwrap()));
    let sys = HillSystem::new(&p, None).unwrap();
    let thetas: Vec<f64> = (0..32).map(|k| TAU * (k as f64 + 0.5) / 32.0).collect();
    let mut group = c.benchmark_group("conjugate_sweep_32");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                conjugate_sweep(&sys, Point::new(0.5, 0.0), &thetas, 4.0, &SolverOptions::default(), exec).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, gauss_bonnet, conjugate_scan);
criterion_main!(benches);
