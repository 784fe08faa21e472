use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qca_core::analysis::{linspace, sweep, BaseParams, InitialCondition};
use qca_core::classical::{sample_statistics, BitRow, SamplingConfig};
use qca_core::exact::{basis_state, initial_row, RowChannel, TrajectoryStepper};
use qca_core::gates::{build_async_gate, commutator_norm};
use qca_core::meanfield::stationary;
use qca_core::{Boundary, EvolutionConfig, MFState, Mode, UpdateOrder};

fn gates(c: &mut Criterion) {
    let p = BaseParams::REFERENCE.at(0.5, 0.5).unwrap();
    c.bench_function("build_async_gate", |b| b.iter(|| build_async_gate(black_box(&p))));
    c.bench_function("commutator_norm", |b| b.iter(|| commutator_norm(black_box(&p))));
}

fn dense(c: &mut Criterion) {
    let p = BaseParams::REFERENCE.at(0.5, 0.5).unwrap();
    let cfg = EvolutionConfig::dense(UpdateOrder::LeftToRight, 1);
    let mut group = c.benchmark_group("dense");
    for sites in [4, 6] {
        let channel = RowChannel::new(sites, &p, &cfg).unwrap();
        let rho = initial_row(&vec![true; sites]).unwrap();
        group.bench_function(format!("channel_build_L{sites}"), |b| b.iter(|| RowChannel::new(sites, &p, &cfg).unwrap()));
        group.bench_function(format!("channel_apply_L{sites}"), |b| b.iter(|| channel.apply_unchecked(black_box(&rho))));
    }
    group.finish();
}

fn trajectories(c: &mut Criterion) {
    let p = BaseParams::REFERENCE.at(0.5, 0.5).unwrap();
    let mut group = c.benchmark_group("trajectory");
    for sites in [8, 12] {
        let cfg = EvolutionConfig {
            mode: Mode::Trajectory { samples: 1, seed: 0 },
            ..EvolutionConfig::dense(UpdateOrder::LeftToRight, 1)
        };
        let mut stepper = TrajectoryStepper::new(sites, &p, &cfg).unwrap();
        let psi0 = basis_state(&vec![true; sites]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        group.bench_function(format!("step_L{sites}"), |b| {
            b.iter(|| {
                let mut psi = psi0.clone();
                stepper.step_resampling(&mut psi, &mut rng)
            })
        });
    }
    group.finish();
}

fn mean_field(c: &mut Criterion) {
    let base = BaseParams::REFERENCE;
    let p = base.at(0.5, 0.5).unwrap();
    c.bench_function("stationary_1000", |b| b.iter(|| stationary(black_box(&p), &MFState::FULL, 1000).unwrap()));
    let grid = linspace(0.0, 1.0, 21);
    c.bench_function("sweep_21x21", |b| {
        b.iter(|| sweep(&base, &grid, &grid, 1000, InitialCondition::High).unwrap())
    });
}

fn classical(c: &mut Criterion) {
    let p = BaseParams::REFERENCE.at(0.5, 0.0).unwrap();
    let cfg = SamplingConfig {
        steps: 100,
        trials: 200,
        boundary: Boundary::Periodic,
        seed: 3,
    };
    let row = BitRow::full(64);
    c.bench_function("pca_L64_T100_200trials", |b| b.iter(|| sample_statistics(&row, &p, &cfg).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = gates, dense, trajectories, mean_field, classical
}
criterion_main!(benches);
