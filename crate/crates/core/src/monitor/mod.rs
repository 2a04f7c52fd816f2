// Licensed under the Apache-2.0 license

//! Hardware monitors observing the bus one step at a time.
//!
//! Monitors run before a step's memory effect commits. A [`Violation`] makes
//! the emulator discard the effect and reset; APEX never resets, it only
//! clears `exec`.

pub mod apex;
pub mod rata;
pub mod vrased;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use apex::{apex_update, ApexConfig, ApexEvent, ApexMonitor, ApexState, ClearCause, Phase};
pub use rata::{rata_update, RataMonitor, RataState, RataVariant};
pub use vrased::{vrased_check, VrasedConfig, VrasedMonitor, VrasedState};

use crate::isa::Address;
use crate::mcu::{BusSignals, MemAccess};
use crate::memory::{MemoryMap, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    KeyAccess,
    SwAttInterrupt,
    SwAttNonAtomicEntryOrExit,
    LmtWrite,
    DmaDuringProtected,
}

/// Which monitors are present.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorSet {
    pub vrased: bool,
    pub rata: Option<RataVariant>,
    pub apex: bool,
}

/// Per-step inputs the monitors read from outside the bus: the challenge
/// register, the RTC and the metadata registers.
#[derive(Debug, Clone, Copy)]
pub struct MonitorEnv {
    pub cycle: u64,
    pub chal: [u8; 16],
    pub rtc: u64,
    pub metadata: ApexConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EvidenceKind {
    Violation { violation: Violation },
    ExecCleared { cause: ClearCause },
    ExecSet,
    LmtUpdated { lmt: String },
}

/// One evidence-log line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub cycle: u64,
    #[serde(flatten)]
    pub kind: EvidenceKind,
    pub pc: Address,
    pub irq: bool,
    pub accesses: Vec<MemAccess>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BankStep {
    pub violations: Vec<Violation>,
    pub lmt_update: Option<[u8; 16]>,
}

impl BankStep {
    pub fn violated(&self) -> bool {
        !self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorBank {
    pub vrased: Option<VrasedMonitor>,
    pub rata: Option<RataMonitor>,
    pub apex: Option<ApexMonitor>,
    dmem: Region,
    pub evidence: Vec<EvidenceRecord>,
}

impl MonitorBank {
    pub fn new(set: MonitorSet, map: &MemoryMap) -> Self {
        MonitorBank {
            vrased: set.vrased.then(|| VrasedMonitor::new(VrasedConfig::from_map(map))),
            rata: set.rata.map(|v| RataMonitor::new(v, map.swatt.start)),
            apex: set.apex.then(ApexMonitor::default),
            dmem: map.dmem,
            evidence: Vec::new(),
        }
    }

    /// A bank with nothing enabled: the unprotected baseline MCU.
    pub fn none(map: &MemoryMap) -> Self {
        MonitorBank::new(MonitorSet::default(), map)
    }

    pub fn set(&self) -> MonitorSet {
        MonitorSet {
            vrased: self.vrased.is_some(),
            rata: self.rata.as_ref().map(|r| r.state.variant),
            apex: self.apex.is_some(),
        }
    }

    pub fn exec(&self) -> bool {
        self.apex.as_ref().is_some_and(|a| a.state.exec)
    }

    pub fn lmt(&self) -> Option<[u8; 16]> {
        self.rata.as_ref().map(|r| r.state.lmt)
    }

    /// Runs VRASED, RATA and APEX on one step's signals, in that order.
    pub fn bank_step(&mut self, sig: &BusSignals, env: &MonitorEnv) -> BankStep {
        let mut out = BankStep::default();
        if let Some(v) = &mut self.vrased {
            out.violations.extend(v.observe(sig));
        }
        if let Some(r) = &mut self.rata {
            let (next, v) = rata_update(sig, r.state, r.swatt_entry, &env.chal, env.rtc);
            if let Some(v) = v {
                out.violations.push(v);
            }
            if next.lmt != r.state.lmt {
                out.lmt_update = Some(next.lmt);
            }
            r.state = next;
        }
        if let Some(a) = &mut self.apex {
            let (next, event) = apex_update(sig, a.state, &env.metadata, &self.dmem);
            a.state = next;
            match event {
                Some(ApexEvent::Completed) => self.evidence.push(record(env.cycle, EvidenceKind::ExecSet, sig)),
                Some(ApexEvent::Cleared(cause)) => {
                    self.evidence.push(record(env.cycle, EvidenceKind::ExecCleared { cause }, sig))
                }
                None => {}
            }
        }
        for &violation in &out.violations {
            self.evidence.push(record(env.cycle, EvidenceKind::Violation { violation }, sig));
        }
        if let Some(lmt) = out.lmt_update {
            if !out.violated() {
                self.evidence.push(record(env.cycle, EvidenceKind::LmtUpdated { lmt: hex::encode(lmt) }, sig));
            }
        }
        out
    }

    /// MCU reset: volatile monitor state goes back to idle, the RATA latch
    /// and LMT persist.
    pub fn on_reset(&mut self) {
        if let Some(v) = &mut self.vrased {
            v.on_reset();
        }
        if let Some(a) = &mut self.apex {
            a.on_reset();
        }
    }

    /// Forgets PC history without touching `exec`; used when the host
    /// repositions the PC (request handling, boot).
    pub fn rebase_pc(&mut self, pc: Address) {
        if let Some(v) = &mut self.vrased {
            v.state.last_pc = Some(pc);
        }
        if let Some(a) = &mut self.apex {
            a.state.last_pc = Some(pc);
        }
    }

    pub fn violations(&self) -> impl Iterator<Item = (u64, Violation)> + '_ {
        self.evidence.iter().filter_map(|r| match r.kind {
            EvidenceKind::Violation { violation } => Some((r.cycle, violation)),
            _ => None,
        })
    }

    /// Writes the evidence log as JSON lines.
    pub fn write_evidence(&self, mut out: impl Write) -> std::io::Result<()> {
        for rec in &self.evidence {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn record(cycle: u64, kind: EvidenceKind, sig: &BusSignals) -> EvidenceRecord {
    EvidenceRecord { cycle, kind, pc: sig.pc, irq: sig.irq, accesses: sig.accesses().copied().collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcu::AccessKind;

    fn env() -> MonitorEnv {
        MonitorEnv { cycle: 7, chal: [0; 16], rtc: 0, metadata: ApexConfig::default() }
    }

    #[test]
    fn benign_trace_with_only_vrased() {
        let map = MemoryMap::default();
        let mut bank = MonitorBank::new(MonitorSet { vrased: true, ..Default::default() }, &map);
        for pc in (0x1000..0x1020).step_by(2) {
            let sig = BusSignals::new(pc).with_access(MemAccess::core(0x3000 + pc % 64, AccessKind::Write));
            assert!(!bank.bank_step(&sig, &env()).violated());
        }
        assert!(bank.evidence.is_empty());
    }

    #[test]
    fn key_access_and_irq_same_step_both_recorded() {
        let map = MemoryMap::default();
        let set = MonitorSet { vrased: true, rata: Some(RataVariant::B), apex: true };
        let mut bank = MonitorBank::new(set, &map);
        bank.rebase_pc(0x0800);
        bank.bank_step(&BusSignals::new(0x0800), &env());
        let sig = BusSignals::new(0x0802).with_irq().with_access(MemAccess::dma(0x0FE0, AccessKind::Read));
        let step = bank.bank_step(&sig, &env());
        assert!(step.violations.contains(&Violation::KeyAccess));
        assert!(step.violations.contains(&Violation::SwAttInterrupt));
        assert_eq!(bank.violations().count(), step.violations.len());
        let mut buf = Vec::new();
        bank.write_evidence(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"violation\":\"key_access\""), "{text}");
    }
}
