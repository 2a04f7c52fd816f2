// Licensed under the Apache-2.0 license

//! Shared fixtures for the criterion benches.

use attestsim::harness::demo;
use attestsim::instrument::{Instrumented, Target};
use attestsim::mcu::McuState;
use attestsim::memory::MemoryMap;
use attestsim::monitor::{MonitorBank, MonitorSet, RataVariant};

/// Idle RATA_B device with a PMEM of `kib` KiB.
pub fn rata_device(kib: u32) -> (McuState, MonitorBank) {
    let map = MemoryMap::with_pmem_size(kib * 1024);
    let st = McuState::load_program(&[], map).expect("empty image fits");
    let bank = MonitorBank::new(MonitorSet { vrased: true, rata: Some(RataVariant::B), apex: false }, &map);
    (st, bank)
}

/// Demo program `name`, optionally instrumented, loaded and parked at
/// `er_start` with one benign input queued.
pub fn demo_device(name: &str, instrumented: bool, dfa: bool) -> (McuState, MonitorBank) {
    let prog = demo::program(name).expect("known demo");
    let target = Target::default();
    let asm = if instrumented {
        Instrumented::build(&prog, target, dfa).expect("demo instruments").assembled
    } else {
        prog.assemble(target.map.pmem.start).expect("demo assembles")
    };
    let mut st = McuState::load_program(&asm.bytes, target.map).expect("demo fits");
    st.gpio_in.extend(demo::benign_inputs(name, 1, 7).remove(0));
    let bank = MonitorBank::new(MonitorSet { vrased: true, rata: None, apex: false }, &target.map);
    (st, bank)
}
