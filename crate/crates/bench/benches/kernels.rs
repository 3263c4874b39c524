//! Hot kernels on the reference 400 x 64 phase grid: one splitting step,
//! a particle batch, the node-wise drift verification, and the weighted
//! norms behind every distance measurement.

use criterion::{criterion_group, criterion_main, Criterion};

use rtlab_core::grid::{Boundary, GridSolver, KineticState, PhaseGrid, WeightTable};
use rtlab_core::harris::{verify_drift, LyapunovWeights};
use rtlab_core::macro_limit::chemotactic_velocity;
use rtlab_core::model::ModelParams;
use rtlab_core::particle::ParticleEnsemble;

fn reference() -> (ModelParams, PhaseGrid) {
    let model = ModelParams::reference().unwrap();
    let grid = PhaseGrid::line(10.0, 400, 64, Boundary::Outflow).unwrap();
    (model, grid)
}

fn grid_step(c: &mut Criterion) {
    let (model, grid) = reference();
    let solver = GridSolver::new(&grid, &model).unwrap();
    let mut state = KineticState::uniform(&grid);
    c.bench_function("grid_step_400x64", |b| {
        b.iter(|| solver.step(&mut state).unwrap())
    });
}

fn particle_batch(c: &mut Criterion) {
    let (model, _) = reference();
    c.bench_function("particles_10k_to_t1", |b| {
        b.iter(|| {
            let mut e = ParticleEnsemble::new_uniform_box(10_000, &model, 5.0, 1).unwrap();
            e.advance(&model, 1.0).unwrap();
            e
        })
    });
}

fn drift_verification(c: &mut Criterion) {
    let (model, grid) = reference();
    let w = LyapunovWeights::from_model(&model, &grid).unwrap();
    let mut g = c.benchmark_group("certificates");
    g.sample_size(20);
    g.bench_function("verify_drift_400x64", |b| {
        b.iter(|| verify_drift(&model, &grid, &w, 1e-8).unwrap())
    });
    g.finish();
}

fn weighted_norms(c: &mut Criterion) {
    let (model, grid) = reference();
    let w = LyapunovWeights::from_model(&model, &grid).unwrap();
    let table = w.phi_table(&model, &grid);
    let state = KineticState::uniform(&grid);
    c.bench_function("phi_norm_400x64", |b| b.iter(|| table.norm(&grid, &state.f)));
    let plain = WeightTable::plain(&grid);
    c.bench_function("l1_distance_400x64", |b| {
        b.iter(|| plain.distance(&grid, &state.f, &state.f))
    });
}

fn drift_field(c: &mut Criterion) {
    let (model, grid) = reference();
    let xs: Vec<f64> = (0..1920).map(|i| -6.0 + 12.0 * (i as f64 + 0.5) / 1920.0).collect();
    let mut u = [0.0];
    c.bench_function("chemotactic_velocity_1920_nodes", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for &x in &xs {
                chemotactic_velocity(&grid, &model.rate, &model.chemo, &[x], &mut u);
                acc += u[0];
            }
            acc
        })
    });
}

criterion_group!(
    kernels,
    grid_step,
    particle_batch,
    drift_verification,
    weighted_norms,
    drift_field
);
criterion_main!(kernels);
