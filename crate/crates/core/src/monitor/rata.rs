// Licensed under the Apache-2.0 license

use serde::{Deserialize, Serialize};

use crate::isa::Address;
use crate::mcu::BusSignals;
use crate::memory::{page, Region};

use super::Violation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RataVariant {
    /// Timestamp PMEM modifications with the RTC.
    A,
    /// Log the next challenge after a PMEM modification.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RataState {
    pub variant: RataVariant,
    pub lmt: [u8; 16],
    pub pmem_modified_latch: bool,
}

impl RataState {
    pub fn new(variant: RataVariant) -> Self {
        RataState { variant, lmt: [0; 16], pmem_modified_latch: false }
    }
}

/// Zero-padded little-endian encoding of an RTC value into the LMT field.
pub fn rtc_to_lmt(rtc: u64) -> [u8; 16] {
    let mut out = [0u8; 16];
    out[..8].copy_from_slice(&rtc.to_le_bytes());
    out
}

pub fn lmt_to_rtc(lmt: &[u8; 16]) -> Option<u64> {
    lmt[8..].iter().all(|&b| b == 0).then(|| u64::from_le_bytes(lmt[..8].try_into().unwrap()))
}

/// Pure RATA transition. Returns the next state and an `LmtWrite` violation
/// when any agent tries to store into the LMT field.
pub fn rata_update(
    sig: &BusSignals,
    st: RataState,
    swatt_entry: Address,
    chal_region_bytes: &[u8; 16],
    rtc_value: u64,
) -> (RataState, Option<Violation>) {
    let lmt_region: Region = page::LMT;
    if sig.accesses().any(|a| a.is_write() && a.touches(&lmt_region)) {
        return (st, Some(Violation::LmtWrite));
    }
    let mut next = st;
    match st.variant {
        RataVariant::A => {
            if sig.pmem_write {
                next.lmt = rtc_to_lmt(rtc_value);
            }
        }
        RataVariant::B => {
            if sig.pmem_write {
                next.pmem_modified_latch = true;
            }
            if sig.pc == swatt_entry && next.pmem_modified_latch && !sig.is_dma() && !sig.irq {
                next.lmt = *chal_region_bytes;
                next.pmem_modified_latch = false;
            }
        }
    }
    (next, None)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RataMonitor {
    pub state: RataState,
    pub swatt_entry: Address,
}

impl RataMonitor {
    pub fn new(variant: RataVariant, swatt_entry: Address) -> Self {
        RataMonitor { state: RataState::new(variant), swatt_entry }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcu::{AccessKind, MemAccess};

    const ENTRY: Address = 0x0800;

    fn pmem_write() -> BusSignals {
        BusSignals::new(0x1000).with_access(MemAccess::core(0x1100, AccessKind::Write)).derive_pmem_write(&Region::new(0x1000, 0x2000))
    }

    #[test]
    fn variant_b_logs_challenge_after_modification() {
        let c1 = [0x11; 16];
        let st = RataState::new(RataVariant::B);
        let (st, v) = rata_update(&pmem_write(), st, ENTRY, &[0; 16], 0);
        assert!(v.is_none());
        assert!(st.pmem_modified_latch);
        let (st, _) = rata_update(&BusSignals::new(ENTRY), st, ENTRY, &c1, 0);
        assert_eq!(st.lmt, c1);
        assert!(!st.pmem_modified_latch);
        // Second attestation without modification keeps the LMT.
        let (st, _) = rata_update(&BusSignals::new(ENTRY), st, ENTRY, &[0x22; 16], 0);
        assert_eq!(st.lmt, c1);
    }

    #[test]
    fn variant_a_stamps_rtc() {
        let (st, _) = rata_update(&pmem_write(), RataState::new(RataVariant::A), ENTRY, &[0; 16], 42);
        assert_eq!(lmt_to_rtc(&st.lmt), Some(42));
    }

    #[test]
    fn lmt_writes_are_violations() {
        for agent_dma in [false, true] {
            let acc = if agent_dma {
                MemAccess::dma(page::LMT.start + 6, AccessKind::Write)
            } else {
                MemAccess::core(page::LMT.start + 14, AccessKind::Write)
            };
            let sig = BusSignals::new(0x1000).with_access(acc);
            let (st, v) = rata_update(&sig, RataState::new(RataVariant::B), ENTRY, &[0; 16], 0);
            assert_eq!(v, Some(Violation::LmtWrite));
            assert_eq!(st.lmt, [0; 16]);
        }
        let read = BusSignals::new(0x1000).with_access(MemAccess::core(page::LMT.start, AccessKind::Read));
        assert!(rata_update(&read, RataState::new(RataVariant::B), ENTRY, &[0; 16], 0).1.is_none());
    }
}
