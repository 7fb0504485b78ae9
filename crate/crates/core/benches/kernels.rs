//! Sequential against rayon-parallel execution of the two hot loops.
//!
//! Without the `parallel` feature both variants run sequentially.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use efs_core::backward::BackwardConfig;
use efs_core::datasets::{gaussian_mixture, MixtureSpec};
use efs_core::exec::Execution;
use efs_core::forward::{forward_gradient_with, run_forward_with, ForwardConfig};
use efs_core::pipeline::{batch_seeds, generate_from_trajectory, Augmentation, BatchOptions};
use efs_core::potential::PotentialParams;
use efs_core::rng::EfsRng;

const MODES: [(&str, Execution); 2] = [
    ("sequential", Execution::Sequential),
    ("parallel", Execution::Parallel),
];

fn forward_gradient(c: &mut Criterion) {
    let p = PotentialParams::new(1.0, 1e-3).unwrap();
    let mut group = c.benchmark_group("forward_gradient");
    for n in [400, 2000] {
        let ps = gaussian_mixture(n, &MixtureSpec::default(), &mut EfsRng::new(1))
            .unwrap()
            .points;
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, n), &ps, |b, ps| {
                b.iter(|| forward_gradient_with(black_box(ps), &p, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn backward_batch(c: &mut Criterion) {
    let fwd = ForwardConfig {
        gamma: 0.1,
        k: 31,
        params: PotentialParams::new(1.0, 1e-3).unwrap(),
    };
    let ps = gaussian_mixture(400, &MixtureSpec::default(), &mut EfsRng::new(1))
        .unwrap()
        .points;
    let traj = run_forward_with(&ps, &fwd, Execution::Sequential).unwrap();
    let bwd = BackwardConfig::new(0.1, 0.1, 300);
    let seeds = batch_seeds(0, 16);
    let mut group = c.benchmark_group("backward_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        let opts = BatchOptions {
            keep_paths: false,
            exec,
        };
        group.bench_function(name, |b| {
            b.iter(|| generate_from_trajectory(&traj, &bwd, Augmentation::Sphere, &seeds, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_gradient, backward_batch);
criterion_main!(benches);
