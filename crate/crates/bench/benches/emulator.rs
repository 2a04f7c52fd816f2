// Licensed under the Apache-2.0 license

use attestsim::harness::demo::NAMES;
use attestsim_bench::demo_device;
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn run_to_halt(name: &str, instrumented: bool, dfa: bool) -> u64 {
    let (mut st, mut bank) = demo_device(name, instrumented, dfa);
    while !st.halted {
        st.step(&mut bank).unwrap();
    }
    st.cycles
}

fn emulator(c: &mut Criterion) {
    let mut g = c.benchmark_group("emulator");
    for name in NAMES {
        for (label, ins, dfa) in [("orig", false, false), ("cfa", true, false), ("dfa", true, true)] {
            g.bench_function(format!("{name}/{label}"), |b| {
                b.iter_batched(|| (), |_| run_to_halt(name, ins, dfa), BatchSize::SmallInput)
            });
        }
    }
    g.finish();
}

criterion_group!(benches, emulator);
criterion_main!(benches);
