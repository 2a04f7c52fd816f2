// Licensed under the Apache-2.0 license

//! Random programs and adversary schedules.

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

use attestsim::asm::{AsmProgram, Assembled};
use attestsim::isa::{AluOp, Cond, Insn, Instruction, Reg};
use attestsim::ief::{ief_run, AttReport, AttScope, ScopeMode};
use attestsim::protocol::{AttRequest, Frame};
use attestsim::Region;
use attestsim::instrument::er_bounds;
use attestsim::mcu::{Agent, BusSignals, McuState};
use attestsim::memory::{page, periph};
use attestsim::monitor::{ApexConfig, MonitorBank, MonitorSet};
use attestsim::MemoryMap;

use super::apex_oracle::Bounds;

pub const OR_MIN: u16 = 0x3400;
pub const OR_MAX: u16 = 0x341F;
const DMA_SRC_AREA: u16 = 0x3300;

#[derive(Debug, Clone, Copy)]
pub enum Inject {
    Irq,
    Dma { src: u16, dst: u16, len: u16 },
}

#[derive(Debug, Clone)]
pub struct ApexCase {
    pub source: String,
    pub irq_vector_set: bool,
    pub schedule: Vec<(usize, Inject)>,
}

/// A store the application (outside ER) may issue before or after ER runs.
fn app_store(rng: &mut impl RngCore) -> String {
    let (target, value) = *[
        ("0x3400", "R2"),
        ("0x3402", "R2"),
        ("er_slot", "R2"),
        ("0xFF22", "R5"),
        ("0xFF20", "R2"),
        ("0x3200", "R2"),
        ("0x3010", "R2"),
    ]
    .choose(rng)
    .unwrap();
    format!("    STI [{target}], {value}\n")
}

pub fn apex_case(rng: &mut impl RngCore) -> ApexCase {
    let mut s = String::from("start: MOVI R2, #3\n    MOVI R3, #1\n    MOVI R5, #er_start\n");
    for _ in 0..rng.random_range(0..3) {
        if rng.random_bool(0.5) {
            s += &app_store(rng);
        }
    }
    let entry = if rng.random_bool(0.85) { "er_start" } else { "er_mid" };
    s += &format!("    JMP {entry}\n");
    s += "er_start: MOVI R4, #7\n    JMP body\ner_slot: .word 0\nbody: STI [0x3400], R2\n";
    s += "er_mid: SUB R2, R3\n    STI [0x3402], R2\n    STI [0x3010], R4\n    JNZ body\n";
    if rng.random_bool(0.1) {
        s += "    JMP er_done\n";
    }
    s += "er_exit: NOP\ner_done: NOP\n";
    for _ in 0..rng.random_range(0..3) {
        if rng.random_bool(0.5) {
            s += &app_store(rng);
        }
    }
    s += "    HALT\nisr: RET\n";

    let dsts = [OR_MIN, OR_MIN + 2, 0x3200, 0x3010, page::ER_MIN, page::EXEC, 0];
    let mut schedule = Vec::new();
    for _ in 0..rng.random_range(0..3) {
        let at = rng.random_range(0..60);
        let inj = if rng.random_bool(0.4) {
            Inject::Irq
        } else {
            let dst = *dsts.choose(rng).unwrap();
            // 0 stands for the ER data slot, resolved after assembly
            Inject::Dma { src: DMA_SRC_AREA, dst, len: rng.random_range(1..=2) }
        };
        schedule.push((at, inj));
    }
    schedule.sort_by_key(|&(at, _)| at);
    ApexCase { source: s, irq_vector_set: rng.random_bool(0.7), schedule }
}

pub struct ApexRun {
    pub trace: Vec<BusSignals>,
    pub exec_reported: bool,
    pub bounds: Bounds,
}

pub fn run_apex_case(case: &ApexCase) -> ApexRun {
    let map = MemoryMap::default();
    let asm: Assembled = AsmProgram::parse(&case.source).unwrap().assemble(map.pmem.start).unwrap();
    let er = er_bounds(&asm).unwrap();
    let cfg = ApexConfig { or_min: OR_MIN, or_max: OR_MAX, ..er };
    let mut st = McuState::load_program(&asm.bytes, map).unwrap();
    for (i, w) in cfg.to_words().into_iter().enumerate() {
        st.poke_word(page::METADATA.start + 2 * i as u16, w);
    }
    // DMA source words hold er_min, so metadata overwrites keep it valid
    for i in 0..4 {
        st.poke_word(DMA_SRC_AREA + 2 * i, cfg.er_min);
    }
    if case.irq_vector_set {
        st.poke_word(periph::IRQ_VEC, asm.symbol("isr").unwrap());
    }
    let slot = asm.symbol("er_slot").unwrap();
    let mut bank = MonitorBank::new(MonitorSet { vrased: false, rata: None, apex: true }, &map);
    let mut trace = Vec::new();
    let mut next = 0;
    for step in 0..400 {
        while next < case.schedule.len() && case.schedule[next].0 == step {
            match case.schedule[next].1 {
                Inject::Irq => st.trigger_interrupt(),
                Inject::Dma { src, dst, len } => {
                    let dst = if dst == 0 { slot } else { dst };
                    st.dma_program(src, dst, len).unwrap();
                }
            }
            next += 1;
        }
        if st.halted && !st.dma.active {
            break;
        }
        let out = st.step(&mut bank).unwrap();
        if out.fault.is_some() {
            break;
        }
        trace.push(out.signals);
    }
    st.dma.active = false;
    st.irq_pending = false;
    let configured: Vec<u8> = cfg.to_words().iter().flat_map(|w| w.to_le_bytes()).collect();
    let metadata_intact = st.bytes(page::METADATA) == configured.as_slice();
    let run = ief_run(&mut st, &mut bank, &[9; 16], &AttScope::pox(&cfg)).unwrap();
    trace.push(BusSignals::new(map.swatt.start));
    let bounds = Bounds { er_min: cfg.er_min, er_max: cfg.er_max, or_min: OR_MIN, or_max: OR_MAX, dmem: (0x3000, 0x3FFF), metadata_intact };
    ApexRun { trace, exec_reported: run.report.exec, bounds }
}

/// How a fuzzed program goes after the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyAttack {
    Direct,
    Indirect,
    DmaRegisters,
    DmaHost,
    SwAttMiddle,
}

pub const KEY_ATTACKS: [KeyAttack; 5] =
    [KeyAttack::Direct, KeyAttack::Indirect, KeyAttack::DmaRegisters, KeyAttack::DmaHost, KeyAttack::SwAttMiddle];

#[derive(Debug, Clone)]
pub struct KeyCase {
    pub attack: KeyAttack,
    pub source: String,
    /// Host-side DMA from the key: (step, key word, dst, len).
    pub host_dma: Option<(usize, u16, u16, u16)>,
}

fn filler(rng: &mut impl RngCore) -> String {
    match rng.random_range(0..5) {
        0 => format!("    MOVI R{}, #{}\n", rng.random_range(2..6), rng.random::<u16>()),
        1 => format!("    ADD R{}, R{}\n", rng.random_range(2..6), rng.random_range(2..6)),
        2 => format!("    STI [{:#06x}], R{}\n", 0x3000 + 2 * rng.random_range(0..0x100u16), rng.random_range(2..6)),
        3 => format!("    OUT 0xF002, R{}\n", rng.random_range(2..6)),
        _ => "    NOP\n".to_string(),
    }
}

/// Stores that would exfiltrate whatever a read produced.
const LEAK: &str = "    STI [0x3200], R2\n    OUT 0xF002, R2\n    PUSH R2\n    MOV R3, R2\n";

pub fn key_case(rng: &mut impl RngCore, map: &MemoryMap) -> KeyCase {
    let attack = *KEY_ATTACKS.choose(rng).unwrap();
    let kw = map.key.start + 2 * rng.random_range(0..16u16);
    let mut s = String::from("start: NOP\n");
    for _ in 0..rng.random_range(0..6) {
        s += &filler(rng);
    }
    let mut host_dma = None;
    match attack {
        KeyAttack::Direct => s += &format!("    LDI R2, [{kw:#06x}]\n"),
        KeyAttack::Indirect => {
            let off = 2 * rng.random_range(0..8u16);
            let split = rng.random_range(0..kw - off);
            s += &format!("    MOVI R3, #{split}\n    MOVI R4, #{}\n    ADD R3, R4\n", kw - off - split);
            s += &format!("    LD R2, [R3+{off}]\n");
        }
        KeyAttack::DmaRegisters => {
            let dst = 0x3100 + 2 * rng.random_range(0..0x40u16);
            let len = rng.random_range(1..=4u16).min((map.key.end() as u16 - kw) / 2);
            s += &format!(
                "    MOVI R2, #{kw}\n    STI [0xF010], R2\n    MOVI R2, #{dst}\n    STI [0xF012], R2\n    MOVI R2, #{len}\n    STI [0xF014], R2\n    MOVI R2, #1\n    STI [0xF016], R2\n    NOP\n    LDI R2, [{dst:#06x}]\n"
            );
        }
        KeyAttack::DmaHost => {
            let dst = 0x3100 + 2 * rng.random_range(0..0x40u16);
            let len = rng.random_range(1..=4u16).min((map.key.end() as u16 - kw) / 2);
            let at = rng.random_range(0..8);
            host_dma = Some((at, kw, dst, len));
            s += &format!("    NOP\n    NOP\n    LDI R2, [{dst:#06x}]\n");
        }
        KeyAttack::SwAttMiddle => {
            let off = 2 * rng.random_range(1..4u16);
            s += &format!("    JMP {:#06x}\n", map.swatt.start + off);
        }
    }
    s += LEAK;
    for _ in 0..rng.random_range(0..4) {
        s += &filler(rng);
    }
    s += "    HALT\n";
    KeyCase { attack, source: s, host_dma }
}

/// Everything a non-SW-Att observer can see after a run.
#[derive(Debug, PartialEq, Eq)]
pub struct Observable {
    pub regs: [u16; 8],
    pub flags: (bool, bool),
    pub mem_outside_key: Vec<u8>,
    pub gpio_out: Vec<u16>,
    pub trace: Vec<BusSignals>,
    pub cycles: u64,
}

pub struct KeyRun {
    pub observable: Observable,
    pub resets: usize,
    /// Every protected read was vetoed and the first one came no later than the first reset.
    pub vetoed: bool,
}

pub fn run_key_case(case: &KeyCase, key: &[u8; 32], steps: usize) -> KeyRun {
    let map = MemoryMap::default();
    let asm = AsmProgram::parse(&case.source).unwrap().assemble(map.pmem.start).unwrap();
    let mut st = McuState::load_program(&asm.bytes, map).unwrap();
    st.provision_key(key);
    let mut bank = MonitorBank::new(MonitorSet { vrased: true, rata: None, apex: false }, &map);
    let mut trace = Vec::new();
    let (mut resets, mut vetoed) = (0, true);
    for step in 0..steps {
        if let Some((at, kw, dst, len)) = case.host_dma {
            if at == step {
                st.dma_program(kw, dst, len).unwrap();
            }
        }
        if st.halted && !st.dma.active {
            break;
        }
        let out = st.step(&mut bank).unwrap();
        let in_swatt = map.swatt.contains(out.signals.pc);
        let protected = out
            .signals
            .accesses()
            .any(|a| a.touches(&map.key) && (a.agent == Agent::Dma || !in_swatt));
        if protected && !out.reset {
            vetoed = false;
        }
        if out.reset {
            resets += 1;
        }
        trace.push(out.signals);
    }
    let (ks, ke) = (map.key.start as usize, map.key.end() as usize);
    let mut mem = st.mem.clone();
    mem[ks..ke].fill(0);
    KeyRun {
        observable: Observable {
            regs: st.regs,
            flags: (st.zero, st.carry),
            mem_outside_key: mem,
            gpio_out: st.gpio_out.clone(),
            trace,
            cycles: st.cycles,
        },
        resets,
        vetoed,
    }
}

pub fn random_key(rng: &mut impl RngCore) -> [u8; 32] {
    let mut k = [0u8; 32];
    rng.fill_bytes(&mut k);
    k
}

fn reg(rng: &mut impl RngCore, lo: u8) -> Reg {
    Reg::new(rng.random_range(lo..8)).unwrap()
}

/// Address that is mostly somewhere interesting: PMEM, DMEM, the key,
/// ROM, the monitor page or peripherals.
pub fn interesting_addr(rng: &mut impl RngCore, map: &MemoryMap) -> u16 {
    let even = |v: u16| v & !1;
    match rng.random_range(0..8) {
        0 => even(map.pmem.start + rng.random_range(0..map.pmem.len as u16)),
        1 | 2 => even(0x3000 + rng.random_range(0..0x1000u16)),
        3 => map.key.start + 2 * rng.random_range(0..16u16),
        4 => even(rng.random_range(0..0x1000u16)),
        5 => 0xFF00 + 2 * rng.random_range(0..0x80u16),
        6 => 0xF000 + 2 * rng.random_range(0..0x0Cu16),
        _ => rng.random(),
    }
}

/// Any encodable instruction. `lo` is the lowest register index used as a
/// destination, so callers can keep PC and SP out of reach.
pub fn random_insn(rng: &mut impl RngCore, map: &MemoryMap, lo: u8) -> Instruction {
    let ops = [AluOp::Add, AluOp::Sub, AluOp::And, AluOp::Xor];
    let conds = [Cond::Zero, Cond::NotZero, Cond::Carry];
    let code = |rng: &mut dyn RngCore| even_in(rng, map.pmem.start, map.pmem.len as u16);
    match rng.random_range(0..19) {
        0 => Insn::Nop,
        1 => Insn::Halt,
        2 => Insn::Movi { rd: reg(rng, lo), imm: rng.random() },
        3 => Insn::Mov { rd: reg(rng, lo), rs: reg(rng, 0) },
        4 => Insn::Ld { rd: reg(rng, lo), base: reg(rng, 0), off: rng.random() },
        5 => Insn::St { base: reg(rng, 0), off: rng.random(), rs: reg(rng, 0) },
        6 => Insn::Ldi { rd: reg(rng, lo), addr: interesting_addr(rng, map) },
        7 => Insn::Sti { addr: interesting_addr(rng, map), rs: reg(rng, 0) },
        8 => Insn::Alu { op: *ops.choose(rng).unwrap(), rd: reg(rng, lo), rs: reg(rng, 0) },
        9 => Insn::Cmp { ra: reg(rng, 0), rb: reg(rng, 0) },
        10 => Insn::Jmp { target: code(rng) },
        11 => Insn::Jcc { cond: *conds.choose(rng).unwrap(), target: code(rng) },
        12 => Insn::Jmpr { rs: reg(rng, 0) },
        13 => Insn::Call { target: code(rng) },
        14 => Insn::Ret,
        15 => Insn::Push { rs: reg(rng, 0) },
        16 => Insn::Pop { rd: reg(rng, lo) },
        17 => Insn::In { rd: reg(rng, lo), port: 0xF000 + 2 * rng.random_range(0..0x0Cu16) },
        _ => Insn::Out { port: 0xF000 + 2 * rng.random_range(0..0x0Cu16), rs: reg(rng, 0) },
    }
}

fn even_in(rng: &mut dyn RngCore, start: u16, len: u16) -> u16 {
    (start + rng.random_range(0..len)) & !1
}

pub fn random_image(rng: &mut impl RngCore, map: &MemoryMap, n: usize, lo: u8) -> Vec<u8> {
    (0..n).flat_map(|_| random_insn(rng, map, lo).encode()).collect()
}

fn random_scope(rng: &mut impl RngCore) -> AttScope {
    let modes = [ScopeMode::FullPmem, ScopeMode::LmtOnly, ScopeMode::Pox];
    let n = rng.random_range(0..6);
    AttScope {
        mode: *modes.choose(rng).unwrap(),
        regions: (0..n).map(|_| Region::new(rng.random(), rng.random::<u16>() as u32)).collect(),
    }
}

pub fn random_frame(rng: &mut impl RngCore) -> Frame {
    match rng.random_range(0..3) {
        0 => Frame::Request(AttRequest {
            chal: rng.random(),
            scope: random_scope(rng),
            pox: rng.random_bool(0.5).then(|| ApexConfig {
                er_min: rng.random(),
                er_max: rng.random(),
                or_min: rng.random(),
                or_max: rng.random(),
            }),
        }),
        1 => {
            let n = rng.random_range(0..200);
            Frame::Response(AttReport {
                chal: rng.random(),
                scope: random_scope(rng),
                exec: rng.random(),
                lmt: rng.random(),
                mac: rng.random(),
                or_bytes: (0..n).map(|_| rng.random()).collect(),
            })
        }
        _ => {
            let n = rng.random_range(0..40);
            Frame::Abort((0..n).map(|_| rng.random_range(' '..='~')).collect())
        }
    }
}
