// Licensed under the Apache-2.0 license

use serde::{Deserialize, Serialize};

use crate::isa::Address;
use crate::mcu::{Agent, BusSignals};
use crate::memory::{MemoryMap, Region};

use super::Violation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrasedConfig {
    pub k_region: Region,
    pub swatt_region: Region,
    pub entry: Address,
    pub exit: Address,
}

impl VrasedConfig {
    pub fn from_map(map: &MemoryMap) -> Self {
        VrasedConfig {
            k_region: map.key,
            swatt_region: map.swatt,
            entry: map.swatt.start,
            exit: map.swatt_exit(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VrasedState {
    pub in_swatt: bool,
    pub entered_at_entry: bool,
    pub last_pc: Option<Address>,
}

/// Pure transition function of the VRASED monitor.
pub fn vrased_check(sig: &BusSignals, st: VrasedState, cfg: &VrasedConfig) -> (VrasedState, Vec<Violation>) {
    let mut violations = Vec::new();
    let in_now = cfg.swatt_region.contains(sig.pc);

    let bad_entry = in_now && !st.in_swatt && sig.pc != cfg.entry;
    let bad_exit = st.in_swatt && !in_now && st.last_pc != Some(cfg.exit);
    if bad_entry || bad_exit {
        violations.push(Violation::SwAttNonAtomicEntryOrExit);
    }
    if sig.irq && in_now {
        violations.push(Violation::SwAttInterrupt);
    }
    if sig
        .accesses()
        .any(|a| a.touches(&cfg.k_region) && (a.agent == Agent::Dma || !in_now))
    {
        violations.push(Violation::KeyAccess);
    }
    if in_now && sig.accesses().any(|a| a.agent == Agent::Dma) {
        violations.push(Violation::DmaDuringProtected);
    }

    let entered_at_entry = match (st.in_swatt, in_now) {
        (false, true) => sig.pc == cfg.entry,
        (true, true) => st.entered_at_entry,
        _ => false,
    };
    let next = VrasedState { in_swatt: in_now, entered_at_entry, last_pc: Some(sig.pc) };
    (next, violations)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VrasedMonitor {
    pub cfg: VrasedConfig,
    pub state: VrasedState,
}

impl VrasedMonitor {
    pub fn new(cfg: VrasedConfig) -> Self {
        VrasedMonitor { cfg, state: VrasedState::default() }
    }

    pub fn observe(&mut self, sig: &BusSignals) -> Vec<Violation> {
        let (next, v) = vrased_check(sig, self.state, &self.cfg);
        self.state = next;
        v
    }

    pub fn on_reset(&mut self) {
        self.state = VrasedState::default();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcu::{AccessKind, MemAccess};

    fn cfg() -> VrasedConfig {
        VrasedConfig::from_map(&MemoryMap::default())
    }

    fn at(pc: Address) -> BusSignals {
        BusSignals::new(pc)
    }

    #[test]
    fn app_read_of_key_is_flagged() {
        let sig = at(0x1000).with_access(MemAccess::core(0x0FE0, AccessKind::Read));
        let (_, v) = vrased_check(&sig, VrasedState::default(), &cfg());
        assert_eq!(v, vec![Violation::KeyAccess]);
    }

    #[test]
    fn swatt_reads_key_legitimately() {
        let c = cfg();
        let (st, v) = vrased_check(&at(c.entry), VrasedState::default(), &c);
        assert!(v.is_empty());
        assert!(st.entered_at_entry);
        let sig = at(c.entry + 2).with_access(MemAccess::core(0x0FE2, AccessKind::Read));
        let (_, v) = vrased_check(&sig, st, &c);
        assert!(v.is_empty());
    }

    #[test]
    fn jump_into_middle_is_flagged() {
        let c = cfg();
        let st = VrasedState { last_pc: Some(0x1000), ..Default::default() };
        let (_, v) = vrased_check(&at(c.entry + 4), st, &c);
        assert_eq!(v, vec![Violation::SwAttNonAtomicEntryOrExit]);
    }

    #[test]
    fn leaving_early_is_flagged_leaving_from_exit_is_not() {
        let c = cfg();
        let inside = VrasedState { in_swatt: true, entered_at_entry: true, last_pc: Some(c.entry + 2) };
        let (_, v) = vrased_check(&at(0x1000), inside, &c);
        assert_eq!(v, vec![Violation::SwAttNonAtomicEntryOrExit]);
        let at_exit = VrasedState { last_pc: Some(c.exit), ..inside };
        let (st, v) = vrased_check(&at(0x1000), at_exit, &c);
        assert!(v.is_empty());
        assert!(!st.in_swatt);
    }

    #[test]
    fn irq_and_dma_inside_swatt() {
        let c = cfg();
        let inside = VrasedState { in_swatt: true, entered_at_entry: true, last_pc: Some(c.entry) };
        let (_, v) = vrased_check(&at(c.entry + 2).with_irq(), inside, &c);
        assert_eq!(v, vec![Violation::SwAttInterrupt]);
        let dma = at(c.entry + 2).with_access(MemAccess::dma(0x3000, AccessKind::Write));
        let (_, v) = vrased_check(&dma, inside, &c);
        assert_eq!(v, vec![Violation::DmaDuringProtected]);
    }

    #[test]
    fn dma_touching_key_always_flagged() {
        let c = cfg();
        let inside = VrasedState { in_swatt: true, entered_at_entry: true, last_pc: Some(c.entry) };
        let sig = at(c.entry + 2).with_access(MemAccess::dma(0x0FFE, AccessKind::Read));
        let (_, v) = vrased_check(&sig, inside, &c);
        assert!(v.contains(&Violation::KeyAccess));
    }
}
