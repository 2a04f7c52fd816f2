// Licensed under the Apache-2.0 license

use std::collections::BTreeSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ief::{expected_mac, AttReport, AttScope, Chal, ScopeMode};
use crate::memory::{page, MemoryMap};
use crate::monitor::rata::lmt_to_rtc;
use crate::monitor::{ApexConfig, RataVariant};

use super::frame::AttRequest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reason {
    Ok,
    MacMismatch,
    StaleChallenge,
    ExecZero,
    LmtMismatch,
    PathInvalid,
    DataReplayMismatch,
    ParseError,
    ProverSilent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub accepted: bool,
    pub reason: Reason,
}

impl Verdict {
    pub const OK: Verdict = Verdict { accepted: true, reason: Reason::Ok };

    pub fn reject(reason: Reason) -> Verdict {
        debug_assert_ne!(reason, Reason::Ok);
        Verdict { accepted: false, reason }
    }

    /// `self` if it rejects, otherwise `next()`.
    pub fn and_then(self, next: impl FnOnce() -> Verdict) -> Verdict {
        if self.accepted {
            next()
        } else {
            self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerifierError {
    #[error("challenge counter exhausted")]
    CounterExhausted,
}

/// Verifier endpoint state for one prover.
#[derive(Debug, Clone)]
pub struct Verifier {
    key: [u8; 32],
    rng: ChaCha20Rng,
    next_counter: Option<u64>,
    last_issued: u64,
    outstanding: BTreeSet<Chal>,
    /// Challenge of the latest authorized update (RATA_B).
    pub last_update_chal: Chal,
    /// RTC value of the latest authorized update (RATA_A).
    pub authorized_rtc: u64,
    pub last_seen_lmt: Option<[u8; 16]>,
    update_pending: bool,
}

impl Verifier {
    pub fn new(key: [u8; 32], seed: u64) -> Self {
        Verifier::with_counter(key, seed, 1)
    }

    /// Starts issuing at `first`. Lets tests reach the end of the counter space.
    pub fn with_counter(key: [u8; 32], seed: u64, first: u64) -> Self {
        Verifier {
            key,
            rng: ChaCha20Rng::seed_from_u64(seed),
            next_counter: Some(first),
            last_issued: 0,
            outstanding: BTreeSet::new(),
            last_update_chal: [0; 16],
            authorized_rtc: 0,
            last_seen_lmt: None,
            update_pending: false,
        }
    }

    pub fn key(&self) -> &[u8; 32] {
        &self.key
    }

    /// Counter of the most recently issued challenge.
    pub fn last_issued(&self) -> u64 {
        self.last_issued
    }

    pub fn issue_challenge(&mut self) -> Result<Chal, VerifierError> {
        let counter = self.next_counter.ok_or(VerifierError::CounterExhausted)?;
        self.next_counter = counter.checked_add(1);
        let mut chal = [0u8; 16];
        chal[..8].copy_from_slice(&counter.to_be_bytes());
        self.rng.fill_bytes(&mut chal[8..]);
        self.last_issued = counter;
        self.outstanding.insert(chal);
        if self.update_pending {
            self.last_update_chal = chal;
            self.update_pending = false;
        }
        Ok(chal)
    }

    pub fn issue(&mut self, scope: AttScope, pox: Option<ApexConfig>) -> Result<AttRequest, VerifierError> {
        Ok(AttRequest { chal: self.issue_challenge()?, scope, pox })
    }

    /// Records an authorized code update. Under RATA_B the next challenge
    /// becomes the expected LMT; under RATA_A `rtc` is the update time.
    pub fn authorize_update(&mut self, rtc: u64) {
        self.update_pending = true;
        self.authorized_rtc = rtc;
    }

    fn check_mac(&self, report: &AttReport, expected_scope: &AttScope, contents: &[&[u8]]) -> Verdict {
        if report.scope != *expected_scope {
            return Verdict::reject(Reason::MacMismatch);
        }
        if expected_mac(&self.key, report, contents) != report.mac {
            return Verdict::reject(Reason::MacMismatch);
        }
        Verdict::OK
    }

    /// Consumes the challenge: each one is good for exactly one response.
    fn check_fresh(&mut self, report: &AttReport) -> Verdict {
        if self.outstanding.remove(&report.chal) {
            Verdict::OK
        } else {
            Verdict::reject(Reason::StaleChallenge)
        }
    }

    /// Plain RA: MAC over the expected PMEM contents.
    pub fn verify_ra(&mut self, report: &AttReport, map: &MemoryMap, expected_pmem: &[u8]) -> Verdict {
        let mut pmem = expected_pmem.to_vec();
        pmem.resize(map.pmem.len as usize, 0);
        self.check_mac(report, &AttScope::full_pmem(map), &[&pmem])
            .and_then(|| self.check_fresh(report))
    }

    /// RATA: MAC over the LMT field, then LMT against the last authorized update.
    pub fn verify_rata(&mut self, report: &AttReport, variant: RataVariant) -> Verdict {
        let v = self
            .check_mac(report, &AttScope::lmt_only(), &[&report.lmt])
            .and_then(|| self.check_fresh(report));
        if !v.accepted {
            return v;
        }
        self.last_seen_lmt = Some(report.lmt);
        let ok = match variant {
            RataVariant::B => report.lmt == self.last_update_chal,
            RataVariant::A => lmt_to_rtc(&report.lmt).is_some_and(|t| t <= self.authorized_rtc),
        };
        if ok {
            Verdict::OK
        } else {
            Verdict::reject(Reason::LmtMismatch)
        }
    }

    /// PoX: MAC over EXEC, metadata, ER, OR and LMT, then `exec == 1`. On
    /// acceptance `report.or_bytes` is authenticated output.
    pub fn verify_pox(&mut self, report: &AttReport, cfg: &ApexConfig, expected_er: &[u8]) -> Verdict {
        let scope = AttScope::pox(cfg);
        debug_assert_eq!(scope.mode, ScopeMode::Pox);
        let exec_word = [report.exec as u8, 0];
        let metadata: Vec<u8> = cfg.to_words().iter().flat_map(|w| w.to_le_bytes()).collect();
        debug_assert_eq!(metadata.len() as u32, page::METADATA.len);
        let mut er = expected_er.to_vec();
        er.resize(cfg.er().len as usize, 0);
        let v = self
            .check_mac(report, &scope, &[&exec_word, &metadata, &er, &report.or_bytes, &report.lmt])
            .and_then(|| self.check_fresh(report));
        if !v.accepted {
            return v;
        }
        if !report.exec {
            return Verdict::reject(Reason::ExecZero);
        }
        Verdict::OK
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counters_strictly_increase() {
        let mut v = Verifier::new([0; 32], 1);
        let a = v.issue_challenge().unwrap();
        let b = v.issue_challenge().unwrap();
        assert!(a[..8] < b[..8]);
    }

    #[test]
    fn counter_exhaustion() {
        let mut v = Verifier::with_counter([0; 32], 1, u64::MAX);
        v.issue_challenge().unwrap();
        assert_eq!(v.issue_challenge(), Err(VerifierError::CounterExhausted));
    }

    #[test]
    fn authorized_update_binds_next_challenge() {
        let mut v = Verifier::new([0; 32], 3);
        v.issue_challenge().unwrap();
        v.authorize_update(0);
        let c = v.issue_challenge().unwrap();
        assert_eq!(v.last_update_chal, c);
        v.issue_challenge().unwrap();
        assert_eq!(v.last_update_chal, c);
    }

    #[test]
    fn verdict_accepted_iff_ok() {
        assert!(Verdict::OK.accepted);
        assert!(!Verdict::reject(Reason::ExecZero).accepted);
    }
}
