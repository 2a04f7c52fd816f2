// Licensed under the Apache-2.0 license

//! Whole-trace judge for proofs of execution. It looks at the finished
//! trace instead of stepping a state machine:
//!
//! 1. the last ER run starts at `er_min`, stays inside ER without
//!    interrupts, and leaves from the exit instruction;
//! 2. from that run's start until the attestation, nothing writes ER or
//!    the metadata/EXEC words, and after the run nothing writes OR;
//! 3. during the run there is no DMA and no write to DMEM from outside ER;
//! 4. the metadata words still hold the configured bounds.

use attestsim::mcu::{Agent, BusSignals};

#[derive(Debug, Clone, Copy)]
pub struct Bounds {
    pub er_min: u16,
    pub er_max: u16,
    pub or_min: u16,
    pub or_max: u16,
    pub dmem: (u16, u16),
    /// Metadata read back from the monitor page equals the configured bounds.
    pub metadata_intact: bool,
}

const METADATA: (u16, u16) = (0xFF20, 0xFF29);

fn inside(a: u16, (lo, hi): (u16, u16)) -> bool {
    lo <= a && a <= hi
}

/// Word access at `a` hits the inclusive range.
fn hits(a: u16, r: (u16, u16)) -> bool {
    inside(a, r) || inside(a.wrapping_add(1), r)
}

/// Verdict for a trace ending with the jump to the attestation routine.
pub fn judge(trace: &[BusSignals], b: &Bounds) -> bool {
    let er = (b.er_min, b.er_max);
    let or = (b.or_min, b.or_max);
    let in_er = |i: usize| inside(trace[i].pc, er);
    let entries: Vec<usize> =
        (0..trace.len()).filter(|&i| in_er(i) && (i == 0 || !in_er(i - 1))).collect();
    if !b.metadata_intact {
        return false;
    }
    let Some(&start) = entries.last() else { return false };
    if trace[start].pc != b.er_min {
        return false;
    }
    let Some(end) = (start..trace.len()).find(|&i| !in_er(i)) else { return false };
    // condition 1
    if trace[end - 1].pc != b.er_max - 1 {
        return false;
    }
    if trace[start..end].iter().any(|s| s.irq) {
        return false;
    }
    // condition 3
    for s in &trace[start..end] {
        for a in s.accesses() {
            if a.agent == Agent::Dma {
                return false;
            }
        }
    }
    // condition 2
    for (i, s) in trace.iter().enumerate().skip(start) {
        for a in s.accesses().filter(|a| a.is_write()) {
            if hits(a.addr, er) || hits(a.addr, METADATA) {
                return false;
            }
            if i >= end && hits(a.addr, or) {
                return false;
            }
        }
    }
    true
}
