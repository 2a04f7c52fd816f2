// Licensed under the Apache-2.0 license

//! Proof-of-execution monitor.
//!
//! `exec` goes to 1 only when ER ran from `er_min` to its exit instruction
//! (the two-byte slot ending at `er_max`) without interruption, DMA or foreign
//! DMEM writes, and stays 1 only while ER, OR and the metadata registers are
//! left untouched.

use serde::{Deserialize, Serialize};

use crate::isa::Address;
use crate::mcu::{Agent, BusSignals};
use crate::memory::{page, Region};

/// Metadata registers as currently stored in the monitor page.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApexConfig {
    pub er_min: Address,
    pub er_max: Address,
    pub or_min: Address,
    pub or_max: Address,
}

impl ApexConfig {
    pub fn is_valid(&self) -> bool {
        self.er_min < self.er_max && self.or_min <= self.or_max && self.er_min % 2 == 0 && self.er_max % 2 == 1
    }

    pub fn er(&self) -> Region {
        Region::inclusive(self.er_min, self.er_max)
    }

    pub fn or(&self) -> Region {
        Region::inclusive(self.or_min, self.or_max)
    }

    /// Address of the last instruction of ER.
    pub fn exit_pc(&self) -> Address {
        self.er_max - 1
    }

    pub fn to_words(&self) -> [u16; 4] {
        [self.er_min, self.er_max, self.or_min, self.or_max]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Idle,
    Executing,
    Executed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApexState {
    pub exec: bool,
    pub phase: Phase,
    pub last_pc: Option<Address>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearCause {
    InvalidMetadata,
    EnteredNotAtMin,
    LeftNotFromExit,
    Interrupt,
    ErWrite,
    MetadataWrite,
    DmaDuringExecution,
    ForeignDmemWrite,
    OrWriteAfterExecution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApexEvent {
    Completed,
    Cleared(ClearCause),
}

/// Pure APEX transition. Also reports what happened this step for the evidence log.
pub fn apex_update(
    sig: &BusSignals,
    st: ApexState,
    cfg: &ApexConfig,
    dmem: &Region,
) -> (ApexState, Option<ApexEvent>) {
    let mut next = ApexState { last_pc: Some(sig.pc), ..st };
    let mut cleared: Option<ClearCause> = None;
    let mut clear = |next: &mut ApexState, cause: ClearCause| {
        next.exec = false;
        next.phase = Phase::Idle;
        cleared.get_or_insert(cause);
    };

    if !cfg.is_valid() {
        if st.exec || st.phase != Phase::Idle {
            clear(&mut next, ClearCause::InvalidMetadata);
        }
        return (next, cleared.map(ApexEvent::Cleared));
    }

    let er = cfg.er();
    let or = cfg.or();
    let prev_in = st.last_pc.is_some_and(|p| er.contains(p));
    let now_in = er.contains(sig.pc);
    let mut completed = false;

    if now_in && !prev_in {
        if sig.pc == cfg.er_min {
            next.phase = Phase::Executing;
            next.exec = false;
        } else {
            clear(&mut next, ClearCause::EnteredNotAtMin);
        }
    } else if prev_in && !now_in {
        if st.last_pc == Some(cfg.exit_pc()) {
            if st.phase == Phase::Executing {
                next.phase = Phase::Executed;
                next.exec = true;
                completed = true;
            }
        } else {
            clear(&mut next, ClearCause::LeftNotFromExit);
        }
    }

    if sig.irq && next.phase == Phase::Executing {
        clear(&mut next, ClearCause::Interrupt);
    }

    let exec_word = Region::new(page::EXEC, 2);
    for a in sig.accesses() {
        if a.is_write() && a.touches(&er) {
            clear(&mut next, ClearCause::ErWrite);
        }
        if a.is_write() && (a.touches(&page::METADATA) || a.touches(&exec_word)) {
            clear(&mut next, ClearCause::MetadataWrite);
        }
        match next.phase {
            Phase::Executing => {
                if a.agent == Agent::Dma {
                    clear(&mut next, ClearCause::DmaDuringExecution);
                } else if a.is_write() && a.touches(dmem) && !now_in {
                    clear(&mut next, ClearCause::ForeignDmemWrite);
                }
            }
            Phase::Executed => {
                if a.is_write() && a.touches(&or) {
                    clear(&mut next, ClearCause::OrWriteAfterExecution);
                }
            }
            Phase::Idle => {}
        }
    }

    let event = match cleared {
        Some(c) if st.exec || st.phase != Phase::Idle || completed => Some(ApexEvent::Cleared(c)),
        Some(_) => None,
        None if completed => Some(ApexEvent::Completed),
        None => None,
    };
    (next, event)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApexMonitor {
    pub state: ApexState,
}

impl ApexMonitor {
    pub fn on_reset(&mut self) {
        self.state = ApexState::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcu::{AccessKind, MemAccess};

    fn cfg() -> ApexConfig {
        ApexConfig { er_min: 0x1000, er_max: 0x100B, or_min: 0x3100, or_max: 0x31FF }
    }

    fn dmem() -> Region {
        Region::new(0x3000, 0x1000)
    }

    fn run(sigs: &[BusSignals]) -> ApexState {
        let mut st = ApexState { last_pc: Some(0x2000), ..Default::default() };
        for s in sigs {
            st = apex_update(s, st, &cfg(), &dmem()).0;
        }
        st
    }

    fn straight_line() -> Vec<BusSignals> {
        vec![
            BusSignals::new(0x1000),
            BusSignals::new(0x1004).with_access(MemAccess::core(0x3100, AccessKind::Write)),
            BusSignals::new(0x1008),
            BusSignals::new(0x100A),
            BusSignals::new(0x100C),
        ]
    }

    #[test]
    fn clean_run_sets_exec() {
        let st = run(&straight_line());
        assert!(st.exec);
        assert_eq!(st.phase, Phase::Executed);
    }

    #[test]
    fn interrupt_mid_er_clears() {
        let mut sigs = straight_line();
        sigs[2] = sigs[2].clone().with_irq();
        assert!(!run(&sigs).exec);
    }

    #[test]
    fn or_write_after_execution_clears() {
        let mut sigs = straight_line();
        sigs.push(BusSignals::new(0x100E).with_access(MemAccess::core(0x3150, AccessKind::Write)));
        assert!(!run(&sigs).exec);
        // A write elsewhere in DMEM after execution is harmless.
        let mut sigs = straight_line();
        sigs.push(BusSignals::new(0x100E).with_access(MemAccess::core(0x3400, AccessKind::Write)));
        assert!(run(&sigs).exec);
    }

    #[test]
    fn entering_mid_er_or_leaving_early_fails() {
        let sigs = [BusSignals::new(0x1004), BusSignals::new(0x1008), BusSignals::new(0x100A), BusSignals::new(0x100C)];
        assert!(!run(&sigs).exec);
        let sigs = [BusSignals::new(0x1000), BusSignals::new(0x1004), BusSignals::new(0x2000)];
        assert!(!run(&sigs).exec);
    }

    #[test]
    fn dma_or_metadata_write_clears() {
        let mut sigs = straight_line();
        sigs.insert(2, BusSignals::new(0x1008).with_access(MemAccess::dma(0x3400, AccessKind::Write)));
        assert!(!run(&sigs).exec);
        let mut sigs = straight_line();
        sigs.push(BusSignals::new(0x2000).with_access(MemAccess::core(page::OR_MAX, AccessKind::Write)));
        assert!(!run(&sigs).exec);
    }

    #[test]
    fn invalid_bounds_never_execute() {
        let bad = ApexConfig { er_min: 0x1010, er_max: 0x1001, ..cfg() };
        let mut st = ApexState::default();
        for s in straight_line() {
            st = apex_update(&s, st, &bad, &dmem()).0;
        }
        assert!(!st.exec);
    }
}
