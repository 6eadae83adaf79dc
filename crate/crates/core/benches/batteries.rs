//! Sequential vs parallel execution of the sampling batteries.
//!
//! On a single-core machine both arms should be close; the parallel arm only
//! pays rayon's scheduling overhead.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use imtk::conditions::{frequency_sweep, TransferFunction};
use imtk::cone::{romanov_check, verify_h3_discrete, H3Options};
use imtk::manifold::{build_manifold, BuildOptions};
use imtk::synthesis::{synthesize_p, SynthesisOptions};
use imtk::system::fixture;
use imtk::Exec;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn sweep(c: &mut Criterion) {
    let sys = fixture("SYS-ODE3").unwrap();
    let tf = TransferFunction::for_system(&sys);
    let mut g = c.benchmark_group("frequency_sweep");
    for (name, exec) in MODES {
        g.bench_function(BenchmarkId::new("SYS-ODE3", name), |b| {
            b.iter(|| frequency_sweep(&tf, black_box(2.5), 1.0, None, exec).unwrap())
        });
    }
    g.finish();
}

fn romanov(c: &mut Criterion) {
    let sys = fixture("SYS-ODE3").unwrap();
    let cf = synthesize_p(&sys, 2.5, &SynthesisOptions::default()).unwrap();
    let mut g = c.benchmark_group("romanov_10k");
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| romanov_check(&cf, 0.5, 10_000, 42, exec).unwrap())
        });
    }
    g.finish();
}

fn h3(c: &mut Criterion) {
    let sys = fixture("SYS-LIN2").unwrap();
    let cf = synthesize_p(&sys, 1.0, &SynthesisOptions::default()).unwrap();
    let mut opts = H3Options::default();
    opts.battery.pairs = 32;
    let mut g = c.benchmark_group("verify_h3");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| {
            b.iter(|| verify_h3_discrete(&sys, &cf, &opts, exec).unwrap())
        });
    }
    g.finish();
}

fn manifold(c: &mut Criterion) {
    let sys = fixture("SYS-LIN2").unwrap();
    let cf = synthesize_p(&sys, 1.0, &SynthesisOptions::default()).unwrap();
    let mut g = c.benchmark_group("build_manifold_lin2");
    g.sample_size(10);
    for (name, exec) in MODES {
        let opts = BuildOptions {
            nodes: Some(11),
            exec,
            ..BuildOptions::default()
        };
        g.bench_function(name, |b| {
            b.iter(|| build_manifold(&sys, &cf, &[], &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweep, romanov, h3, manifold);
criterion_main!(benches);
