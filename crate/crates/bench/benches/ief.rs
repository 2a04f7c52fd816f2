// Licensed under the Apache-2.0 license

use attestsim::ief::{ief_run, AttScope};
use attestsim_bench::rata_device;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn ief(c: &mut Criterion) {
    let mut g = c.benchmark_group("ief");
    for kib in [1u32, 2, 4, 8] {
        g.bench_with_input(BenchmarkId::new("full_pmem", kib), &kib, |b, &kib| {
            b.iter_batched(
                || rata_device(kib),
                |(mut st, mut bank)| {
                    let scope = AttScope::full_pmem(&st.map);
                    ief_run(&mut st, &mut bank, &[1; 16], &scope).unwrap().cycles
                },
                criterion::BatchSize::SmallInput,
            )
        });
        g.bench_with_input(BenchmarkId::new("lmt_only", kib), &kib, |b, &kib| {
            b.iter_batched(
                || rata_device(kib),
                |(mut st, mut bank)| ief_run(&mut st, &mut bank, &[1; 16], &AttScope::lmt_only()).unwrap().cycles,
                criterion::BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

criterion_group!(benches, ief);
criterion_main!(benches);
