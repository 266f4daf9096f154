//! Sequential against rayon execution for the three data-parallel kernels.

use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use gowers_forms::gowers::{correlation_with, gowers_norm_with, NormMethod, PhaseFunction, DEFAULT_BUDGET_LOG2};
use gowers_forms::par::Exec;
use gowers_forms::rankbias::{bias_with, DEFAULT_BIAS_BUDGET};
use gowers_forms::MultilinearForm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn phase(n: usize, depth: u32, seed: u64) -> PhaseFunction {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    PhaseFunction::new(n, depth, (0..1u64 << n).map(|_| r.gen_range(0..1u32 << depth)).collect()).unwrap()
}

fn bench_bias(c: &mut Criterion) {
    let mut g = c.benchmark_group("bias");
    let mut r = ChaCha8Rng::seed_from_u64(1);
    for (n, k) in [(5, 4), (6, 4), (4, 5)] {
        let f = MultilinearForm::random(n, k, &mut r).unwrap();
        for (name, exec) in EXECS {
            g.bench_with_input(BenchmarkId::new(name, format!("n{n}k{k}")), &f, |b, f| {
                b.iter(|| bias_with(black_box(f), exec, DEFAULT_BIAS_BUDGET).unwrap())
            });
        }
    }
    g.finish();
}

fn bench_norm(c: &mut Criterion) {
    let mut g = c.benchmark_group("gowers_norm");
    for (n, k) in [(5, 3), (4, 4), (6, 3)] {
        let f = phase(n, 2, 2);
        for (name, exec) in EXECS {
            for method in [NormMethod::Naive, NormMethod::Recursive] {
                g.bench_with_input(BenchmarkId::new(format!("{name}/{method:?}"), format!("n{n}k{k}")), &f, |b, f| {
                    b.iter(|| gowers_norm_with(black_box(f), k, method, DEFAULT_BUDGET_LOG2, exec).unwrap())
                });
            }
        }
    }
    g.finish();
}

fn bench_correlation(c: &mut Criterion) {
    let mut g = c.benchmark_group("correlation");
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for (n, k) in [(4, 4), (5, 3)] {
        let f = phase(n, 3, 4);
        let alpha = MultilinearForm::random(n, k, &mut r).unwrap();
        for (name, exec) in EXECS {
            g.bench_with_input(BenchmarkId::new(name, format!("n{n}k{k}")), &(&f, &alpha), |b, (f, a)| {
                b.iter(|| correlation_with(black_box(f), black_box(a), DEFAULT_BUDGET_LOG2, exec).unwrap())
            });
        }
    }
    g.finish();
}

criterion_group!(benches, bench_bias, bench_norm, bench_correlation);
criterion_main!(benches);
