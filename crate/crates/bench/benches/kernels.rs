use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;

use anneal_core::dynamics::{initial_state, step};
use anneal_core::linalg::{lowest_eigs_iterative, IterativeOptions, LinearOperator};
use anneal_core::{
    AnnealSchedule, AnnealerKind, HamiltonianParts, Integrator, ProblemInstance,
};

fn instance(rows: usize, cols: usize) -> ProblemInstance {
    ProblemInstance::random(rows, cols, 7).expect("instance")
}

fn matvec(c: &mut Criterion) {
    let inst = instance(4, 4);
    for kind in AnnealerKind::ALL {
        let parts = HamiltonianParts::build(&inst, kind, 3.0, 1.0).unwrap();
        let op = parts.weighted(parts.weights(0.5));
        let x: Vec<Complex64> = (0..op.dim()).map(|i| Complex64::new((i as f64).sin(), 0.0)).collect();
        let mut y = vec![Complex64::new(0.0, 0.0); op.dim()];
        c.bench_function(&format!("matvec 4x4 {kind}"), |b| {
            b.iter(|| op.apply_complex(black_box(&x), &mut y))
        });
    }
}

fn eigensolver(c: &mut Criterion) {
    let inst = instance(3, 4);
    let parts = HamiltonianParts::build(&inst, AnnealerKind::Fermion, 3.0, 1.0).unwrap();
    let op = parts.weighted(parts.weights(0.5));
    c.bench_function("lowest 12 eigenpairs 4x3 fermion", |b| {
        b.iter(|| lowest_eigs_iterative(&op, 12, &IterativeOptions::default()).unwrap())
    });
}

fn propagation(c: &mut Criterion) {
    let inst = instance(3, 4);
    let parts = HamiltonianParts::build(&inst, AnnealerKind::Boson, 3.0, 1.0).unwrap();
    let schedule = AnnealSchedule::new(50.0, 3.0).unwrap();
    for integrator in [Integrator::Midpoint, Integrator::Magnus4] {
        let mut psi = initial_state(&parts);
        c.bench_function(&format!("time step 4x3 boson {integrator:?}"), |b| {
            b.iter(|| step(&parts, &schedule, &mut psi, 25.0, 0.025, integrator, 1e-10).unwrap())
        });
    }
}

criterion_group!(benches, matvec, eigensolver, propagation);
criterion_main!(benches);
