// Licensed under the Apache-2.0 license

//! Code-size and runtime overhead of instrumentation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::asm::{AsmProgram, Assembled};
use crate::isa::Address;
use crate::mcu::{McuState, TransferKind};
use crate::memory::MemoryMap;
use crate::monitor::MonitorBank;

use super::{er_bounds, InstrumentError, Instrumented, Target, ER_DONE};

const RUN_BUDGET: usize = 1_000_000;

/// One run of ER from `er_start` to `er_done` without monitors.
#[derive(Debug, Clone)]
pub struct Execution {
    pub cycles: u64,
    pub state: McuState,
    /// Taken transfers `(from, to)`, interrupts excluded.
    pub transfers: Vec<(Address, Address)>,
}

/// Loads `asm`, applies `setup`, and runs from `er_start` until the PC
/// reaches `er_done`. `None` on fault, halt inside ER or budget exhaustion.
pub fn execute_er(asm: &Assembled, map: MemoryMap, setup: &dyn Fn(&mut McuState)) -> Option<Execution> {
    let er = er_bounds(asm).ok()?;
    let done = asm.symbol(ER_DONE)?;
    let mut st = McuState::load_program(&asm.bytes, map).ok()?;
    setup(&mut st);
    st.set_pc(er.er_min);
    let mut bank = MonitorBank::none(&map);
    let start = st.cycles;
    let mut transfers = Vec::new();
    for _ in 0..RUN_BUDGET {
        if st.pc() == done {
            return Some(Execution { cycles: st.cycles - start, state: st, transfers });
        }
        let out = st.step(&mut bank).ok()?;
        if out.fault.is_some() || st.halted {
            return None;
        }
        if let Some(t) = out.transfer {
            if t.kind != TransferKind::Interrupt {
                transfers.push((t.from, t.to));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramOverhead {
    pub name: String,
    pub orig_bytes: u32,
    pub instr_bytes: u32,
    pub size_pct: f64,
    pub orig_cycles: u64,
    pub instr_cycles: u64,
    pub runtime_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub programs: Vec<ProgramOverhead>,
    pub mean_size_pct: f64,
    pub mean_runtime_pct: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum OverheadError {
    #[error(transparent)]
    Instrument(#[from] InstrumentError),
    #[error("{0}: run did not reach er_done")]
    RunFailed(String),
}

/// A program plus the inputs to average runtime over.
pub struct Workload<'a> {
    pub name: &'a str,
    pub source: &'a AsmProgram,
    pub inputs: Vec<Box<dyn Fn(&mut McuState) + 'a>>,
}

fn pct(orig: f64, new: f64) -> f64 {
    if orig == 0.0 {
        0.0
    } else {
        (new - orig) / orig * 100.0
    }
}

fn er_size(asm: &Assembled) -> u32 {
    er_bounds(asm).map(|e| e.er().len).unwrap_or(0)
}

pub fn measure_overhead(workloads: &[Workload<'_>], target: Target, dfa: bool) -> Result<OverheadReport, OverheadError> {
    let mut programs = Vec::new();
    for w in workloads {
        let ins = Instrumented::build(w.source, target, dfa)?;
        let (mut oc, mut ic) = (0u64, 0u64);
        for setup in &w.inputs {
            let fail = || OverheadError::RunFailed(w.name.to_string());
            oc += execute_er(&ins.original, target.map, setup.as_ref()).ok_or_else(fail)?.cycles;
            ic += execute_er(&ins.assembled, target.map, setup.as_ref()).ok_or_else(fail)?.cycles;
        }
        let n = w.inputs.len().max(1) as u64;
        let (orig_bytes, instr_bytes) = (er_size(&ins.original), er_size(&ins.assembled));
        let (orig_cycles, instr_cycles) = (oc / n, ic / n);
        programs.push(ProgramOverhead {
            name: w.name.to_string(),
            orig_bytes,
            instr_bytes,
            size_pct: pct(orig_bytes as f64, instr_bytes as f64),
            orig_cycles,
            instr_cycles,
            runtime_pct: pct(orig_cycles as f64, instr_cycles as f64),
        });
    }
    let mean = |f: fn(&ProgramOverhead) -> f64| {
        if programs.is_empty() {
            0.0
        } else {
            programs.iter().map(f).sum::<f64>() / programs.len() as f64
        }
    };
    let (mean_size_pct, mean_runtime_pct) = (mean(|p| p.size_pct), mean(|p| p.runtime_pct));
    Ok(OverheadReport { programs, mean_size_pct, mean_runtime_pct })
}

impl OverheadReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>8} {:>8} {:>8} {:>10} {:>10} {:>8}", "program", "bytes", "instr", "size%", "cycles", "instr", "time%");
        for p in &self.programs {
            let _ = writeln!(
                s,
                "{:<12} {:>8} {:>8} {:>8.1} {:>10} {:>10} {:>8.1}",
                p.name, p.orig_bytes, p.instr_bytes, p.size_pct, p.orig_cycles, p.instr_cycles, p.runtime_pct
            );
        }
        let _ = writeln!(s, "{:<12} {:>26.1} {:>30.1}", "mean", self.mean_size_pct, self.mean_runtime_pct);
        s
    }
}
