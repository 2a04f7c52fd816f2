// Licensed under the Apache-2.0 license

//! The three demo applications and their benign input generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::asm::AsmProgram;
use crate::instrument::overhead::OverheadError;
use crate::instrument::{measure_overhead, OverheadReport, Target, Workload};
use crate::isa::Word;
use crate::mcu::McuState;

pub const PUMP: &str = include_str!("../../programs/pump.s");
pub const THRESHOLD: &str = include_str!("../../programs/threshold.s");
pub const RANGING: &str = include_str!("../../programs/ranging.s");

pub const NAMES: [&str; 3] = ["pump", "threshold", "ranging"];

pub fn source(name: &str) -> Option<&'static str> {
    match name {
        "pump" => Some(PUMP),
        "threshold" => Some(THRESHOLD),
        "ranging" => Some(RANGING),
        _ => None,
    }
}

pub fn program(name: &str) -> Option<AsmProgram> {
    source(name).map(|s| AsmProgram::parse(s).expect("demo programs assemble"))
}

/// One benign GPIO_IN sequence for `name`.
pub fn benign_input(name: &str, rng: &mut impl Rng) -> Vec<Word> {
    match name {
        "pump" => (0..4).map(|_| rng.random_range(0..300)).collect(),
        "threshold" | "ranging" => {
            let hi = if name == "threshold" { 1000 } else { 2000 };
            let n = rng.random_range(0..=4u16);
            let mut v = vec![n];
            v.extend((0..n).map(|_| rng.random_range(0..hi)));
            v
        }
        _ => Vec::new(),
    }
}

/// `count` benign input vectors, reproducible from `seed`.
pub fn benign_inputs(name: &str, count: usize, seed: u64) -> Vec<Vec<Word>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..count).map(|_| benign_input(name, &mut rng)).collect()
}

/// Overhead of instrumenting the demo corpus, averaged over `count`
/// benign inputs per program.
pub fn corpus_overhead(count: usize, seed: u64, dfa: bool) -> Result<OverheadReport, OverheadError> {
    let programs: Vec<(&str, AsmProgram)> = NAMES.iter().map(|n| (*n, program(n).expect("known demo"))).collect();
    let workloads: Vec<Workload<'_>> = programs
        .iter()
        .map(|(name, prog)| Workload {
            name,
            source: prog,
            inputs: benign_inputs(name, count, seed)
                .into_iter()
                .map(|input| Box::new(move |st: &mut McuState| st.gpio_in.extend(input.iter().copied())) as Box<dyn Fn(&mut McuState)>)
                .collect(),
        })
        .collect();
    measure_overhead(&workloads, Target::default(), dfa)
}
