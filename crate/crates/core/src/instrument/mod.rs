// Licensed under the Apache-2.0 license

//! Control-flow and data-flow instrumentation passes and their verifiers.
//!
//! Programs follow a fixed ER convention: `er_start` labels the first ER
//! instruction, `er_exit` labels the last one (a two-byte instruction,
//! normally `NOP`) and `er_done` labels the first statement after ER.
//! Instrumented code uses R6 and R7 as scratch, so source programs must
//! leave them alone; guards also clobber the flags.

pub mod cfg;
pub mod overhead;
pub mod passes;
pub mod verify;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::{AsmError, AsmProgram, Assembled, Tag};
use crate::isa::{Address, Reg};
use crate::memory::{MemoryMap, Region};
use crate::monitor::ApexConfig;

pub use cfg::{build_cfg, Cfg, CfgError, EdgeKind};

pub use overhead::{execute_er, measure_overhead, Execution, OverheadReport, ProgramOverhead, Workload};
pub use passes::{instrument_cfa, instrument_dfa};
pub use verify::{verify_cfa, verify_dfa, ILogEntry, OrLogs};

pub const ER_START: &str = "er_start";
pub const ER_EXIT: &str = "er_exit";
pub const ER_DONE: &str = "er_done";
pub const ABORT: &str = "__abort";

pub const SCRATCH_A: Reg = Reg::new_const(6);
pub const SCRATCH_B: Reg = Reg::new_const(7);

/// Placement of the output area, log cursors and logs inside OR.
///
/// OR = `[output][cf_cursor][i_cursor][i_scratch][cf_log][i_log]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLayout {
    pub or_min: Address,
    pub output_len: u16,
    pub cf_capacity: u16,
    pub i_capacity: u16,
}

impl Default for LogLayout {
    fn default() -> Self {
        LogLayout { or_min: 0x3400, output_len: 0x20, cf_capacity: 0x200, i_capacity: 0x200 }
    }
}

impl LogLayout {
    pub fn output(&self) -> Region {
        Region::new(self.or_min, self.output_len as u32)
    }

    pub fn cf_cursor(&self) -> Address {
        self.or_min + self.output_len
    }

    pub fn i_cursor(&self) -> Address {
        self.cf_cursor() + 2
    }

    pub fn i_scratch(&self) -> Address {
        self.cf_cursor() + 4
    }

    pub fn cf_base(&self) -> Address {
        self.cf_cursor() + 6
    }

    pub fn cf_end(&self) -> Address {
        self.cf_base() + self.cf_capacity
    }

    pub fn i_base(&self) -> Address {
        self.cf_end()
    }

    pub fn i_end(&self) -> Address {
        self.i_base() + self.i_capacity
    }

    pub fn or_max(&self) -> Address {
        self.i_end() - 1
    }

    pub fn or(&self) -> Region {
        Region::inclusive(self.or_min, self.or_max())
    }

    /// Everything in OR the program itself must never store to.
    pub fn protected(&self) -> Region {
        Region::inclusive(self.cf_cursor(), self.or_max())
    }

    pub fn validate(&self, map: &MemoryMap) -> Result<(), InstrumentError> {
        let ok = self.or_min % 2 == 0
            && self.output_len % 2 == 0
            && self.cf_capacity % 2 == 0
            && self.i_capacity % 4 == 0
            && (self.or_min as u32 + self.output_len as u32 + 6 + self.cf_capacity as u32 + self.i_capacity as u32)
                <= map.dmem.end()
            && self.or().is_within(&map.dmem);
        if ok {
            Ok(())
        } else {
            Err(InstrumentError::BadLayout)
        }
    }
}

/// Where the instrumented program will run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub layout: LogLayout,
    pub map: MemoryMap,
}

impl Default for Target {
    fn default() -> Self {
        Target { layout: LogLayout::default(), map: MemoryMap::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstrumentError {
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error("line {line}: direct store into the protected log area at {addr:#06x}")]
    DirectLogWrite { line: usize, addr: Address },
    #[error("instrumented code of {size} bytes does not fit in PMEM ({capacity} bytes)")]
    CodeTooLargeForEr { size: u32, capacity: u32 },
    #[error("line {0}: program uses reserved scratch register R6/R7")]
    ReservedRegister(usize),
    #[error("line {0}: guard would clobber flags that are still live")]
    FlagsClobbered(usize),
    #[error("missing ER label `{0}`")]
    MissingLabel(&'static str),
    #[error("ER exit must be a two-byte instruction immediately before `er_done`")]
    BadExit,
    #[error("`.targets` annotation missing on JMPR at line {0}")]
    MissingTargets(usize),
    #[error("DFA instrumentation expects a CFA-instrumented program")]
    NotCfaInstrumented,
    #[error("log layout does not fit inside DMEM")]
    BadLayout,
}

/// ER bounds derived from the ER labels of an assembled program.
pub fn er_bounds(asm: &Assembled) -> Result<ApexConfig, InstrumentError> {
    let start = asm.symbol(ER_START).ok_or(InstrumentError::MissingLabel(ER_START))?;
    let exit = asm.symbol(ER_EXIT).ok_or(InstrumentError::MissingLabel(ER_EXIT))?;
    let done = asm.symbol(ER_DONE).ok_or(InstrumentError::MissingLabel(ER_DONE))?;
    if done != exit.wrapping_add(2) || exit < start || start % 2 != 0 {
        return Err(InstrumentError::BadExit);
    }
    Ok(ApexConfig { er_min: start, er_max: exit + 1, or_min: 0, or_max: 0 })
}

/// An instrumented program together with the bookkeeping the verifiers need.
#[derive(Debug, Clone)]
pub struct Instrumented {
    pub source: AsmProgram,
    pub original: Assembled,
    pub program: AsmProgram,
    pub assembled: Assembled,
    pub target: Target,
    pub dfa: bool,
    /// Original statement index → address where its group starts in the
    /// instrumented image.
    pub group_start: BTreeMap<usize, Address>,
}

impl Instrumented {
    /// Runs the CFA pass, and the DFA pass on top when `dfa` is set.
    pub fn build(source: &AsmProgram, target: Target, dfa: bool) -> Result<Instrumented, InstrumentError> {
        let base = target.map.pmem.start;
        let original = source.assemble(base)?;
        let mut program = instrument_cfa(source, &target)?;
        if dfa {
            program = instrument_dfa(&program, &target)?;
        }
        let assembled = program.assemble(base)?;
        let mut group_start = BTreeMap::new();
        for (i, stmt) in program.stmts.iter().enumerate() {
            if let Tag::Original(o) | Tag::Guard(o) = stmt.tag {
                let addr = assembled.addrs[i];
                group_start.entry(o).and_modify(|a: &mut Address| *a = (*a).min(addr)).or_insert(addr);
            }
        }
        Ok(Instrumented { source: source.clone(), original, program, assembled, target, dfa, group_start })
    }

    /// APEX metadata for running the instrumented program.
    pub fn metadata(&self) -> ApexConfig {
        let er = er_bounds(&self.assembled).expect("instrumented programs keep their ER labels");
        ApexConfig { or_min: self.target.layout.or_min, or_max: self.target.layout.or_max(), ..er }
    }

    /// Instrumented address corresponding to an original address.
    pub fn map_address(&self, orig: Address) -> Option<Address> {
        let idx = self.original.stmt_at(orig)?;
        self.group_start.get(&idx).copied()
    }

    pub fn er_bytes(&self) -> &[u8] {
        let er = self.metadata().er();
        let off = (er.start - self.assembled.base) as usize;
        &self.assembled.bytes[off..off + er.len as usize]
    }
}
