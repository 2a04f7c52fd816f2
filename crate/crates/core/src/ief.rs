// Licensed under the Apache-2.0 license

//! Integrity-ensuring function: the SW-Att routine that MACs a challenge and
//! a set of memory regions with the device key.
//!
//! The routine is modelled as a fixed sequence of micro-ops executing from the
//! SW-Att ROM region. Each micro-op is one emulator step, so the monitors see
//! every key read and every attested word. The MAC itself is HMAC-SHA-256
//! over [`encode_message`].

use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::isa::Address;
use crate::mcu::{Fault, McuState, StepOutcome};
use crate::memory::{page, MemoryMap, Region};
use crate::monitor::{ApexConfig, MonitorBank, Violation};

pub type Chal = [u8; 16];
pub type Tag = [u8; 32];

pub const ENCODING_VERSION: u8 = 1;

pub const ENTRY_CYCLES: u64 = 1000;
pub const KEY_READS: usize = 16;
pub const KEY_READ_CYCLES: u64 = 25;
pub const FINALIZE_CYCLES: u64 = 598;
pub const EXIT_CYCLES: u64 = 2;
/// Cost independent of the attested size.
pub const C_FIXED: u64 = ENTRY_CYCLES + KEY_READS as u64 * KEY_READ_CYCLES + FINALIZE_CYCLES + EXIT_CYCLES;
/// Cost per attested 16-bit word.
pub const C_WORD: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeMode {
    FullPmem,
    LmtOnly,
    Pox,
}

impl ScopeMode {
    pub fn code(self) -> u8 {
        match self {
            ScopeMode::FullPmem => 0,
            ScopeMode::LmtOnly => 1,
            ScopeMode::Pox => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(ScopeMode::FullPmem),
            1 => Some(ScopeMode::LmtOnly),
            2 => Some(ScopeMode::Pox),
            _ => None,
        }
    }
}

/// What an attestation covers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttScope {
    pub mode: ScopeMode,
    pub regions: Vec<Region>,
}

impl AttScope {
    pub fn full_pmem(map: &MemoryMap) -> Self {
        AttScope { mode: ScopeMode::FullPmem, regions: vec![map.pmem] }
    }

    pub fn lmt_only() -> Self {
        AttScope { mode: ScopeMode::LmtOnly, regions: vec![page::LMT] }
    }

    pub fn pox(cfg: &ApexConfig) -> Self {
        AttScope {
            mode: ScopeMode::Pox,
            regions: vec![Region::new(page::EXEC, 2), page::METADATA, cfg.er(), cfg.or(), page::LMT],
        }
    }

    pub fn words(&self) -> u64 {
        self.regions.iter().map(|r| r.len.div_ceil(2) as u64).sum()
    }

    pub fn validate(&self, map: &MemoryMap) -> Result<(), IefError> {
        if self.regions.is_empty() {
            return Err(IefError::InvalidScope("no regions".into()));
        }
        for r in &self.regions {
            if r.len == 0 || r.len > 0xFFFF {
                return Err(IefError::InvalidScope(format!("region {r} has unsupported length")));
            }
            if r.start % 2 != 0 {
                return Err(IefError::InvalidScope(format!("region {r} is not word aligned")));
            }
            if !map.range_mapped(r.start, r.len) {
                return Err(IefError::InvalidScope(format!("region {r} is not mapped")));
            }
            if r.overlaps(&map.key) {
                return Err(IefError::InvalidScope(format!("region {r} overlaps the key")));
            }
        }
        Ok(())
    }
}

/// One micro-op of the SW-Att routine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwAttOp {
    Entry,
    KeyRead(Address),
    Sweep(Address),
    Finalize,
    Exit,
}

impl SwAttOp {
    pub fn pc(self, map: &MemoryMap) -> Address {
        let entry = map.swatt.start;
        match self {
            SwAttOp::Entry => entry,
            SwAttOp::KeyRead(_) => entry + 2,
            SwAttOp::Sweep(_) => entry + 4,
            SwAttOp::Finalize => entry + 6,
            SwAttOp::Exit => map.swatt_exit(),
        }
    }

    pub fn cycles(self) -> u64 {
        match self {
            SwAttOp::Entry => ENTRY_CYCLES,
            SwAttOp::KeyRead(_) => KEY_READ_CYCLES,
            SwAttOp::Sweep(_) => C_WORD,
            SwAttOp::Finalize => FINALIZE_CYCLES,
            SwAttOp::Exit => EXIT_CYCLES,
        }
    }
}

pub fn swatt_plan(scope: &AttScope, map: &MemoryMap) -> Vec<SwAttOp> {
    let mut plan = vec![SwAttOp::Entry];
    plan.extend((0..KEY_READS as u16).map(|i| SwAttOp::KeyRead(map.key.start + 2 * i)));
    for r in &scope.regions {
        plan.extend((0..r.len.div_ceil(2)).map(|w| SwAttOp::Sweep(r.start.wrapping_add(2 * w as u16))));
    }
    plan.push(SwAttOp::Finalize);
    plan.push(SwAttOp::Exit);
    plan
}

/// Cycle cost of one SW-Att run over `scope`.
pub fn predicted_cycles(scope: &AttScope) -> u64 {
    C_FIXED + C_WORD * scope.words()
}

/// Canonical byte string the MAC is computed over.
pub fn encode_message(chal: &Chal, scope: &AttScope, exec: bool, lmt: &[u8; 16], contents: &[&[u8]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + contents.iter().map(|c| c.len()).sum::<usize>());
    out.push(ENCODING_VERSION);
    out.extend_from_slice(chal);
    out.push(scope.mode.code());
    out.extend_from_slice(&(scope.regions.len() as u16).to_le_bytes());
    for r in &scope.regions {
        out.extend_from_slice(&r.start.to_le_bytes());
        out.extend_from_slice(&(r.len as u16).to_le_bytes());
    }
    out.push(exec as u8);
    out.extend_from_slice(lmt);
    for c in contents {
        out.extend_from_slice(c);
    }
    out
}

/// Fields recovered from a canonical message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub chal: Chal,
    pub scope: AttScope,
    pub exec: bool,
    pub lmt: [u8; 16],
    pub contents: Vec<Vec<u8>>,
}

/// Inverse of [`encode_message`]. Region contents are split by the
/// declared region lengths; `None` on any inconsistency.
pub fn decode_message(msg: &[u8]) -> Option<Message> {
    let (&version, rest) = msg.split_first()?;
    if version != ENCODING_VERSION || rest.len() < 19 {
        return None;
    }
    let chal: Chal = rest[..16].try_into().ok()?;
    let mode = ScopeMode::from_code(rest[16])?;
    let n = u16::from_le_bytes([rest[17], rest[18]]) as usize;
    let mut rest = &rest[19..];
    let mut regions = Vec::with_capacity(n.min(64));
    for _ in 0..n {
        if rest.len() < 4 {
            return None;
        }
        let start = u16::from_le_bytes([rest[0], rest[1]]);
        let len = u16::from_le_bytes([rest[2], rest[3]]);
        regions.push(Region::new(start, len as u32));
        rest = &rest[4..];
    }
    if rest.len() < 17 || rest[0] > 1 {
        return None;
    }
    let exec = rest[0] == 1;
    let lmt: [u8; 16] = rest[1..17].try_into().ok()?;
    rest = &rest[17..];
    let mut contents = Vec::with_capacity(regions.len());
    for r in &regions {
        let len = r.len as usize;
        if rest.len() < len {
            return None;
        }
        contents.push(rest[..len].to_vec());
        rest = &rest[len..];
    }
    if !rest.is_empty() {
        return None;
    }
    Some(Message { chal, scope: AttScope { mode, regions }, exec, lmt, contents })
}

pub fn hmac_sha256(key: &[u8], msg: &[u8]) -> Tag {
    let mut m = Hmac::<Sha256>::new_from_slice(key).expect("HMAC accepts any key length");
    m.update(msg);
    m.finalize().into_bytes().into()
}

/// Evidence produced by one SW-Att run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttReport {
    pub chal: Chal,
    pub scope: AttScope,
    pub exec: bool,
    pub lmt: [u8; 16],
    pub mac: Tag,
    /// OR contents for proofs of execution; claimed output otherwise.
    pub or_bytes: Vec<u8>,
}

/// Builds the report from the device's current memory. Called by the
/// emulator at the finalize micro-op.
pub fn compute_report(state: &McuState, scope: &AttScope, exec: bool) -> AttReport {
    let chal = state.chal();
    let lmt = state.lmt();
    let contents: Vec<&[u8]> = scope.regions.iter().map(|r| state.bytes(*r)).collect();
    let msg = encode_message(&chal, scope, exec, &lmt, &contents);
    let or_bytes = match scope.mode {
        ScopeMode::Pox => state.bytes(scope.regions[3]).to_vec(),
        _ => Vec::new(),
    };
    AttReport { chal, scope: scope.clone(), exec, lmt, mac: hmac_sha256(&state.key(), &msg), or_bytes }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IefError {
    #[error("invalid attestation scope: {0}")]
    InvalidScope(String),
    #[error("SW-Att aborted by a device reset ({0:?})")]
    Reset(Vec<Violation>),
    #[error("SW-Att faulted: {0}")]
    Fault(Fault),
    #[error("SW-Att did not finish within {0} steps")]
    Incomplete(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IefRun {
    pub report: AttReport,
    pub cycles: u64,
}

/// Delivers `chal`, runs SW-Att over `scope` and returns the report.
pub fn ief_run(state: &mut McuState, bank: &mut MonitorBank, chal: &Chal, scope: &AttScope) -> Result<IefRun, IefError> {
    ief_run_with(state, bank, chal, scope, |_, _| {})
}

/// Like [`ief_run`], calling `hook(step, state)` before each step so a test
/// or scenario can inject interrupts and DMA mid-routine.
pub fn ief_run_with(
    state: &mut McuState,
    bank: &mut MonitorBank,
    chal: &Chal,
    scope: &AttScope,
    mut hook: impl FnMut(usize, &mut McuState),
) -> Result<IefRun, IefError> {
    scope.validate(&state.map)?;
    let (saved_pc, saved_halted) = (state.pc(), state.halted);
    state.mem[page::CHAL.start as usize..page::CHAL.end() as usize].copy_from_slice(chal);
    state.swatt_request = Some(scope.clone());
    state.swatt_report = None;
    state.set_pc(state.map.swatt.start);
    let budget = swatt_plan(scope, &state.map).len() + 64;
    let mut cycles = 0;
    let result = (|| {
        for i in 0..budget {
            hook(i, state);
            let out: StepOutcome = match state.step(bank) {
                Ok(o) => o,
                Err(_) => return Err(IefError::Incomplete(i)),
            };
            cycles += out.cost;
            if out.reset {
                return Err(IefError::Reset(out.violations));
            }
            if let Some(f) = out.fault {
                return Err(IefError::Fault(f));
            }
            if out.report_ready {
                return Ok(IefRun { report: state.swatt_report.clone().unwrap(), cycles });
            }
        }
        Err(IefError::Incomplete(budget))
    })();
    state.swatt_request = None;
    if result.is_ok() {
        state.regs[0] = saved_pc;
        state.halted = saved_halted;
    }
    result
}

/// Recomputes the MAC a report should carry given the verifier's view of
/// each region's contents.
pub fn expected_mac(key: &[u8; 32], report: &AttReport, contents: &[&[u8]]) -> Tag {
    let msg = encode_message(&report.chal, &report.scope, report.exec, &report.lmt, contents);
    hmac_sha256(key, &msg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcu::DEFAULT_KEY;
    use crate::monitor::{MonitorSet, RataVariant};

    fn device(pmem_size: u32) -> (McuState, MonitorBank) {
        let map = MemoryMap::with_pmem_size(pmem_size);
        let set = MonitorSet { vrased: true, rata: Some(RataVariant::B), apex: false };
        let bank = MonitorBank::new(set, &map);
        (McuState::load_program(&[0x00, 0x04], map).unwrap(), bank)
    }

    #[test]
    fn fixed_cost_constant() {
        assert_eq!(C_FIXED, 2000);
    }

    #[test]
    fn full_sweep_cost_matches_prediction() {
        let (mut st, mut bank) = device(0x400);
        let scope = AttScope::full_pmem(&st.map);
        let run = ief_run(&mut st, &mut bank, &[1; 16], &scope).unwrap();
        assert_eq!(run.cycles, C_FIXED + C_WORD * 512);
        let contents = [st.bytes(st.map.pmem)];
        assert_eq!(expected_mac(&DEFAULT_KEY, &run.report, &contents), run.report.mac);
    }

    #[test]
    fn interrupt_mid_sweep_resets_without_report() {
        let (mut st, mut bank) = device(0x400);
        let scope = AttScope::full_pmem(&st.map);
        let err = ief_run_with(&mut st, &mut bank, &[1; 16], &scope, |i, s| {
            if i == 40 {
                s.trigger_interrupt();
            }
        })
        .unwrap_err();
        assert!(matches!(err, IefError::Reset(ref v) if v.contains(&Violation::SwAttInterrupt)));
        assert!(st.swatt_report.is_none());
        assert!(!st.in_swatt_session());
    }

    #[test]
    fn scope_touching_key_is_rejected() {
        let (mut st, mut bank) = device(0x400);
        let scope = AttScope { mode: ScopeMode::FullPmem, regions: vec![Region::new(0x0FC0, 0x40)] };
        assert!(matches!(ief_run(&mut st, &mut bank, &[0; 16], &scope), Err(IefError::InvalidScope(_))));
    }
}
