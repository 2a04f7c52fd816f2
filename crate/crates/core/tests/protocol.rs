// Licensed under the Apache-2.0 license

mod common;

use attestsim::asm::AsmProgram;
use attestsim::harness::demo;
use attestsim::instrument::{Instrumented, Target};
use attestsim::mcu::{McuState, DEFAULT_KEY};
use attestsim::memory::Image;
use attestsim::monitor::{MonitorBank, MonitorSet, RataVariant};
use attestsim::protocol::db::VerifierDb;
use attestsim::protocol::{
    exchange, mem_duplex, tcp_pair, Frame, Prover, Reason, Transport, TransportError, Verifier, VerifierError,
};
use attestsim::{AttScope, MemoryMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn image(src: &str) -> Vec<u8> {
    AsmProgram::parse(src).unwrap().assemble(MemoryMap::default().pmem.start).unwrap().bytes
}

fn prover(bytes: &[u8], set: MonitorSet) -> Prover {
    let map = MemoryMap::default();
    Prover::new(McuState::load_program(bytes, map).unwrap(), MonitorBank::new(set, &map))
}

const VRASED: MonitorSet = MonitorSet { vrased: true, rata: None, apex: false };
const RATA_B: MonitorSet = MonitorSet { vrased: true, rata: Some(RataVariant::B), apex: false };
const APEX: MonitorSet = MonitorSet { vrased: true, rata: None, apex: true };

fn respond(p: &mut Prover, req: &attestsim::protocol::AttRequest) -> attestsim::AttReport {
    match p.handle(req) {
        Frame::Response(r) => r,
        other => panic!("no report: {other:?}"),
    }
}

#[test]
fn challenges_are_monotone_and_finite() {
    let mut v = Verifier::new(DEFAULT_KEY, 1);
    let a = v.issue_challenge().unwrap();
    let b = v.issue_challenge().unwrap();
    assert!(u64::from_be_bytes(a[..8].try_into().unwrap()) < u64::from_be_bytes(b[..8].try_into().unwrap()));
    let mut v = Verifier::with_counter(DEFAULT_KEY, 1, u64::MAX);
    v.issue_challenge().unwrap();
    assert_eq!(v.issue_challenge(), Err(VerifierError::CounterExhausted));
}

#[test]
fn benign_and_compromised_images() {
    let map = MemoryMap::default();
    let good = image("MOVI R2, #1\nHALT");
    let mut v = Verifier::new(DEFAULT_KEY, 2);
    let req = v.issue(AttScope::full_pmem(&map), None).unwrap();
    let report = respond(&mut prover(&good, VRASED), &req);
    assert_eq!(report.chal, req.chal);
    assert_eq!(v.verify_ra(&report, &map, &good).reason, Reason::Ok);

    let req = v.issue(AttScope::full_pmem(&map), None).unwrap();
    let report = respond(&mut prover(&image("MOVI R2, #2\nHALT"), VRASED), &req);
    assert_eq!(v.verify_ra(&report, &map, &good).reason, Reason::MacMismatch);
}

#[test]
fn replayed_response_is_stale() {
    let map = MemoryMap::default();
    let good = image("HALT");
    let mut v = Verifier::new(DEFAULT_KEY, 3);
    let req = v.issue(AttScope::full_pmem(&map), None).unwrap();
    let report = respond(&mut prover(&good, VRASED), &req);
    assert!(v.verify_ra(&report, &map, &good).accepted);
    v.issue(AttScope::full_pmem(&map), None).unwrap();
    assert_eq!(v.verify_ra(&report, &map, &good).reason, Reason::StaleChallenge);
}

#[test]
fn interrupted_er_reports_exec_zero() {
    let ins = Instrumented::build(&demo::program("pump").unwrap(), Target::default(), false).unwrap();
    let meta = ins.metadata();
    let mut p = prover(&ins.assembled.bytes, APEX);
    p.mcu.gpio_in.extend([120, 250, 90, 210]);
    p.mcu.poke_word(attestsim::memory::periph::IRQ_VEC, meta.er_max + 1);
    let mut v = Verifier::new(DEFAULT_KEY, 4);
    let req = v.issue(AttScope::pox(&meta), Some(meta)).unwrap();
    p.arm_pox(&req);
    let mut n = 0;
    p.run(10_000, |mcu, _| {
        n += 1;
        if n == 20 {
            mcu.trigger_interrupt();
        }
    }, |_| {});
    let Frame::Response(report) = p.attest(&req) else { panic!() };
    assert!(!report.exec);
    assert_eq!(v.verify_pox(&report, &meta, ins.er_bytes()).reason, Reason::ExecZero);
}

#[test]
fn toctou_passes_ra_but_not_rata() {
    let map = MemoryMap::default();
    let good = image("NOP\nNOP\nHALT");
    let evil = image("JMP 0x1000\nHALT");
    for (set, expect) in [(VRASED, Reason::Ok), (RATA_B, Reason::LmtMismatch)] {
        let mut p = prover(&good, set);
        let mut v = Verifier::new(DEFAULT_KEY, 5);
        // infect: DMA the malicious words over the image, then restore them
        for img in [&evil, &good] {
            for (i, w) in img.chunks(2).enumerate() {
                p.mcu.poke_word(0x3C00 + 2 * i as u16, u16::from_le_bytes([w[0], w[1]]));
            }
            p.mcu.dma_program(0x3C00, map.pmem.start, (img.len() / 2) as u16).unwrap();
            while p.mcu.dma.active {
                p.mcu.step(&mut p.bank).unwrap();
            }
        }
        let scope = match set.rata {
            None => AttScope::full_pmem(&map),
            Some(_) => AttScope::lmt_only(),
        };
        let req = v.issue(scope, None).unwrap();
        let report = respond(&mut p, &req);
        let verdict = match set.rata {
            None => v.verify_ra(&report, &map, &good),
            Some(var) => v.verify_rata(&report, var),
        };
        assert_eq!(verdict.reason, expect);
    }
}

#[test]
fn authorized_update_is_accepted_under_rata_b() {
    let map = MemoryMap::default();
    let mut p = prover(&image("NOP\nHALT"), RATA_B);
    let mut v = Verifier::new(DEFAULT_KEY, 6);
    p.mcu.poke_word(0x3000, 0x0004);
    p.mcu.dma_program(0x3000, map.pmem.start, 1).unwrap();
    p.mcu.step(&mut p.bank).unwrap();
    v.authorize_update(p.mcu.cycles);
    let req = v.issue(AttScope::lmt_only(), None).unwrap();
    let report = respond(&mut p, &req);
    assert_eq!(report.lmt, v.last_update_chal);
    assert_eq!(v.verify_rata(&report, RataVariant::B).reason, Reason::Ok);
}

#[test]
fn exchange_over_both_transports() {
    let map = MemoryMap::default();
    let good = image("HALT");
    let (mut va, mut pa) = mem_duplex();
    let (mut vt, mut pt) = tcp_pair().unwrap();
    let ends: [(&mut dyn Transport, &mut dyn Transport); 2] = [(&mut va, &mut pa), (&mut vt, &mut pt)];
    for (vend, pend) in ends {
        let mut p = prover(&good, VRASED);
        let mut v = Verifier::new(DEFAULT_KEY, 7);
        let req = v.issue(AttScope::full_pmem(&map), None).unwrap();
        let report = exchange(vend, pend, &req, |r| p.handle(r)).unwrap();
        assert!(v.verify_ra(&report, &map, &good).accepted);
    }
}

#[test]
fn dropped_request_means_silent_prover() {
    let map = MemoryMap::default();
    let (mut vend, mut pend) = mem_duplex();
    vend.drop_next(1);
    let mut p = prover(&image("HALT"), VRASED);
    let req = Verifier::new(DEFAULT_KEY, 8).issue(AttScope::full_pmem(&map), None).unwrap();
    assert_eq!(exchange(&mut vend, &mut pend, &req, |r| p.handle(r)), Err(Reason::ProverSilent));
}

/// Delivers a corrupted response.
struct Garbled;

impl Transport for Garbled {
    fn send(&mut self, _: &Frame) -> Result<(), TransportError> {
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame, TransportError> {
        Ok(Frame::decode(&[0x02, 3, 0, 0, 0, 1, 2, 3])?)
    }
}

#[test]
fn malformed_response_is_a_parse_error() {
    let map = MemoryMap::default();
    let (_, mut pend) = mem_duplex();
    let req = Verifier::new(DEFAULT_KEY, 9).issue(AttScope::full_pmem(&map), None).unwrap();
    assert_eq!(exchange(&mut Garbled, &mut pend, &req, |_| Frame::Abort(String::new())), Err(Reason::ParseError));
}

#[test]
fn verifier_db_round_trip() {
    let dir = std::env::temp_dir().join(format!("attestsim-db-{}", std::process::id()));
    let db = VerifierDb::open(&dir).unwrap();
    let img = Image { bytes: image("MOVI R2, #3\nHALT"), map: MemoryMap::default() };
    let meta = db.register("pump", &img).unwrap();
    let (back, m2) = db.load("pump").unwrap();
    assert_eq!(back.bytes, img.bytes);
    assert_eq!(meta, m2);
    let newer = Image { bytes: image("MOVI R2, #4\nHALT"), ..img.clone() };
    assert_eq!(db.record_update("pump", &newer, 12).unwrap().last_update_counter, 12);
    std::fs::write(dir.join("pump.bin"), b"tampered").unwrap();
    assert!(db.load("pump").is_err());
    assert!(db.meta("missing").is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn frames_round_trip(seed in any::<u64>()) {
        let frame = common::gen::random_frame(&mut ChaCha20Rng::seed_from_u64(seed));
        let bytes = frame.encode();
        let back = Frame::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &frame);
        prop_assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn decoding_arbitrary_bytes_is_a_fixed_point(bytes in prop::collection::vec(any::<u8>(), 0..64), ty in 1u8..4) {
        let mut framed = vec![ty];
        framed.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
        framed.extend_from_slice(&bytes);
        if let Ok(f) = Frame::decode(&framed) {
            prop_assert_eq!(f.encode(), framed);
        }
    }
}
