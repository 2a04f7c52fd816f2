// Licensed under the Apache-2.0 license

//! Cycle-counted emulator of the low-end MCU.
//!
//! A step does exactly one of: one DMA word transfer, servicing a pending
//! interrupt, or one core instruction (priority in that order). The step's
//! bus activity is summarized as [`BusSignals`] and handed to the
//! [`MonitorBank`] before anything commits; a violation discards the effect
//! and resets the device.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ief::{self, AttReport, AttScope, SwAttOp};
use crate::isa::{Address, AluOp, Cond, DecodeError, Insn, Instruction, Reg, Word};
use crate::memory::{page, periph, MemoryMap, Region};
use crate::monitor::{ApexConfig, MonitorBank, MonitorEnv, Violation};

/// Key provisioned into ROM unless the caller picks another one.
pub const DEFAULT_KEY: [u8; 32] = [0x0b; 32];

pub const DMA_STEP_CYCLES: u64 = 1;
pub const IRQ_ACK_CYCLES: u64 = 1;
pub const IRQ_VECTOR_CYCLES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Core,
    Dma,
}

/// One word-sized bus access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemAccess {
    pub addr: Address,
    pub kind: AccessKind,
    pub agent: Agent,
}

impl MemAccess {
    pub fn core(addr: Address, kind: AccessKind) -> Self {
        MemAccess { addr, kind, agent: Agent::Core }
    }

    pub fn dma(addr: Address, kind: AccessKind) -> Self {
        MemAccess { addr, kind, agent: Agent::Dma }
    }

    pub fn is_write(&self) -> bool {
        self.kind == AccessKind::Write
    }

    /// True if either byte of the accessed word lies in `r`.
    pub fn touches(&self, r: &Region) -> bool {
        r.contains(self.addr) || r.contains(self.addr.wrapping_add(1))
    }
}

/// Per-step observation offered to the monitors.
///
/// A DMA word transfer carries its source read and destination write; every
/// other step has at most one access.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusSignals {
    pub pc: Address,
    pub mem_access: [Option<MemAccess>; 2],
    pub irq: bool,
    pub pmem_write: bool,
}

impl BusSignals {
    pub fn new(pc: Address) -> Self {
        BusSignals { pc, mem_access: [None, None], irq: false, pmem_write: false }
    }

    pub fn with_irq(mut self) -> Self {
        self.irq = true;
        self
    }

    pub fn with_access(mut self, access: MemAccess) -> Self {
        let slot = self.mem_access.iter_mut().find(|s| s.is_none()).expect("at most two accesses per step");
        *slot = Some(access);
        self
    }

    /// Sets `pmem_write` from the accesses.
    pub fn derive_pmem_write(mut self, pmem: &Region) -> Self {
        let hit = self.accesses().any(|a| a.is_write() && a.touches(pmem));
        self.pmem_write = hit;
        self
    }

    pub fn accesses(&self) -> impl Iterator<Item = &MemAccess> {
        self.mem_access.iter().flatten()
    }

    pub fn is_dma(&self) -> bool {
        self.accesses().any(|a| a.agent == Agent::Dma)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DmaConfig {
    pub src: Address,
    pub dst: Address,
    /// Words still to transfer.
    pub len: u16,
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    Jump,
    Branch,
    Indirect,
    Call,
    Return,
    Interrupt,
}

/// A taken control transfer, for ground-truth traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: Address,
    pub to: Address,
    pub kind: TransferKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum Fault {
    #[error("decode error at {pc:#06x}: {msg}")]
    Decode { pc: Address, msg: String },
    #[error("access to unmapped address {0:#06x}")]
    Unmapped(Address),
    #[error("misaligned word access at {0:#06x}")]
    Misaligned(Address),
    #[error("stack access outside dmem at {0:#06x}")]
    Stack(Address),
    #[error("PC {0:#06x} outside executable memory")]
    PcOutOfRange(Address),
    #[error("SW-Att entered at {0:#06x} without a session")]
    SwAttOutOfSession(Address),
}

#[derive(Debug, Error)]
pub enum McuError {
    #[error("image of {size} bytes exceeds pmem of {capacity} bytes")]
    ImageTooLarge { size: usize, capacity: u32 },
    #[error("DMA range [{start:#06x}, +{words} words) leaves mapped memory")]
    DmaRangeError { start: Address, words: u16 },
    #[error("machine is halted")]
    Halted,
    #[error(transparent)]
    Map(#[from] crate::memory::MapError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub signals: BusSignals,
    pub reset: bool,
    pub violations: Vec<Violation>,
    pub cost: u64,
    pub transfer: Option<Transfer>,
    pub fault: Option<Fault>,
    /// A SW-Att run finished in this step and published its report.
    pub report_ready: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SwAttSession {
    plan: Vec<SwAttOp>,
    scope: AttScope,
    idx: usize,
    pending: Option<AttReport>,
}

/// Registers, memory and device state of the emulated MCU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct McuState {
    pub map: MemoryMap,
    /// R0 is the PC and R1 the SP.
    pub regs: [Word; 8],
    pub zero: bool,
    pub carry: bool,
    pub mem: Vec<u8>,
    pub cycles: u64,
    pub irq_pending: bool,
    pub dma: DmaConfig,
    pub halted: bool,
    pub fault: Option<Fault>,
    pub gpio_in: VecDeque<Word>,
    pub gpio_out: Vec<Word>,
    /// Scope the next SW-Att invocation attests; full PMEM when unset.
    pub swatt_request: Option<AttScope>,
    /// Report published by the last completed SW-Att run.
    pub swatt_report: Option<AttReport>,
    swatt_session: Option<SwAttSession>,
}

enum SessionUpdate {
    Continue(SwAttSession),
    Finish(Option<AttReport>),
}

/// Everything a step decided to do, applied only if no monitor objects.
#[derive(Default)]
struct Effect {
    cost: u64,
    regs: Option<([Word; 8], bool, bool)>,
    writes: Vec<(Address, Word)>,
    pop_input: bool,
    halt: bool,
    transfer: Option<Transfer>,
    dma: Option<DmaConfig>,
    irq_ack: bool,
    swatt: Option<SessionUpdate>,
    after_swatt_pc: Option<Address>,
}

impl McuState {
    /// Fresh device with `image` in PMEM and the default key in ROM.
    pub fn load_program(image: &[u8], map: MemoryMap) -> Result<McuState, McuError> {
        map.validate()?;
        if image.len() as u32 > map.pmem.len {
            return Err(McuError::ImageTooLarge { size: image.len(), capacity: map.pmem.len });
        }
        let mut mem = vec![0u8; 0x10000];
        let boot = Insn::Jmp { target: map.pmem.start }.encode();
        let bv = map.boot_vector as usize;
        mem[bv..bv + boot.len()].copy_from_slice(&boot);
        let ks = map.key.start as usize;
        mem[ks..ks + 32].copy_from_slice(&DEFAULT_KEY);
        let ps = map.pmem.start as usize;
        mem[ps..ps + image.len()].copy_from_slice(image);
        let mut regs = [0; 8];
        regs[0] = map.pmem.start;
        regs[1] = map.stack_top();
        Ok(McuState {
            map,
            regs,
            zero: false,
            carry: false,
            mem,
            cycles: 0,
            irq_pending: false,
            dma: DmaConfig::default(),
            halted: false,
            fault: None,
            gpio_in: VecDeque::new(),
            gpio_out: Vec::new(),
            swatt_request: None,
            swatt_report: None,
            swatt_session: None,
        })
    }

    /// Manufacturing-time key provisioning.
    pub fn provision_key(&mut self, key: &[u8; 32]) {
        let ks = self.map.key.start as usize;
        self.mem[ks..ks + 32].copy_from_slice(key);
    }

    pub fn key(&self) -> [u8; 32] {
        let ks = self.map.key.start as usize;
        self.mem[ks..ks + 32].try_into().unwrap()
    }

    pub fn pc(&self) -> Address {
        self.regs[0]
    }

    pub fn sp(&self) -> Address {
        self.regs[1]
    }

    /// Host-side PC placement (boot into a function, vector to SW-Att).
    pub fn set_pc(&mut self, pc: Address) {
        self.regs[0] = pc;
        self.halted = false;
    }

    pub fn read_word(&self, addr: Address) -> Word {
        u16::from_le_bytes([self.mem[addr as usize], self.mem[addr.wrapping_add(1) as usize]])
    }

    /// Host-side write that bypasses the bus and the monitors.
    pub fn poke_word(&mut self, addr: Address, value: Word) {
        let [lo, hi] = value.to_le_bytes();
        self.mem[addr as usize] = lo;
        self.mem[addr.wrapping_add(1) as usize] = hi;
    }

    pub fn bytes(&self, r: Region) -> &[u8] {
        &self.mem[r.start as usize..r.end() as usize]
    }

    pub fn chal(&self) -> [u8; 16] {
        self.bytes(page::CHAL).try_into().unwrap()
    }

    pub fn lmt(&self) -> [u8; 16] {
        self.bytes(page::LMT).try_into().unwrap()
    }

    pub fn exec_flag(&self) -> bool {
        self.read_word(page::EXEC) & 1 == 1
    }

    pub fn metadata(&self) -> ApexConfig {
        ApexConfig {
            er_min: self.read_word(page::ER_MIN),
            er_max: self.read_word(page::ER_MAX),
            or_min: self.read_word(page::OR_MIN),
            or_max: self.read_word(page::OR_MAX),
        }
    }

    /// Clears volatile state. PMEM, ROM, the monitor page and the cycle
    /// counter survive.
    pub fn reset(&mut self) {
        self.regs = [0; 8];
        self.regs[0] = self.map.boot_vector;
        self.regs[1] = self.map.stack_top();
        self.zero = false;
        self.carry = false;
        let d = self.map.dmem;
        self.mem[d.start as usize..d.end() as usize].fill(0);
        self.dma = DmaConfig::default();
        self.irq_pending = false;
        self.halted = false;
        self.fault = None;
        self.swatt_session = None;
    }

    /// Adversary capability: raise the interrupt line.
    pub fn trigger_interrupt(&mut self) {
        self.irq_pending = true;
    }

    /// Adversary capability: program the DMA controller for `len` words.
    pub fn dma_program(&mut self, src: Address, dst: Address, len: u16) -> Result<(), McuError> {
        for start in [src, dst] {
            if start % 2 != 0 || !self.map.range_mapped(start, len as u32 * 2) {
                return Err(McuError::DmaRangeError { start, words: len });
            }
        }
        self.dma = DmaConfig { src, dst, len, active: len > 0 };
        Ok(())
    }

    pub fn in_swatt_session(&self) -> bool {
        self.swatt_session.is_some()
    }

    pub fn env(&self) -> MonitorEnv {
        MonitorEnv { cycle: self.cycles, chal: self.chal(), rtc: self.cycles, metadata: self.metadata() }
    }

    fn check_access(&self, addr: Address) -> Result<(), Fault> {
        if addr % 2 != 0 {
            return Err(Fault::Misaligned(addr));
        }
        if !self.map.is_mapped(addr) {
            return Err(Fault::Unmapped(addr));
        }
        Ok(())
    }

    /// Value a read at `addr` returns, and whether it consumes an input.
    fn peek_read(&self, addr: Address) -> (Word, bool) {
        match addr {
            periph::GPIO_IN => (self.gpio_in.front().copied().unwrap_or(0), !self.gpio_in.is_empty()),
            periph::RTC => (self.cycles as Word, false),
            _ => (self.read_word(addr), false),
        }
    }

    fn commit_write(&mut self, addr: Address, value: Word, bank: &MonitorBank) {
        if self.map.rom.contains(addr) {
            return;
        }
        if self.map.periph.contains(addr) {
            match addr {
                periph::GPIO_OUT => self.gpio_out.push(value),
                periph::GPIO_IN | periph::RTC | periph::ATT_OUT => {}
                periph::DMA_CTRL => {
                    self.poke_word(addr, value);
                    if value & 1 == 1 {
                        let (src, dst, len) = (
                            self.read_word(periph::DMA_SRC),
                            self.read_word(periph::DMA_DST),
                            self.read_word(periph::DMA_LEN),
                        );
                        let _ = self.dma_program(src, dst, len);
                    }
                }
                _ => self.poke_word(addr, value),
            }
            return;
        }
        if addr == page::EXEC {
            return;
        }
        if page::LMT.contains(addr) && bank.rata.is_some() {
            return;
        }
        self.poke_word(addr, value);
    }

    fn sync_monitor_page(&mut self, bank: &MonitorBank) {
        self.poke_word(page::EXEC, bank.exec() as Word);
    }

    /// Executes one step. Errors only if the core is halted with no DMA pending.
    pub fn step(&mut self, bank: &mut MonitorBank) -> Result<StepOutcome, McuError> {
        if self.halted && !self.dma.active {
            return Err(McuError::Halted);
        }
        let pc = self.pc();
        let mut sig = BusSignals::new(pc);
        let effect = if self.dma.active {
            self.plan_dma(&mut sig)
        } else if self.irq_pending {
            self.plan_irq(&mut sig)
        } else if self.map.swatt.contains(pc) {
            self.plan_swatt(&mut sig, bank)
        } else {
            self.plan_core(&mut sig)
        };
        let effect = match effect {
            Ok(e) => e,
            Err(fault) => {
                // The PC is already inside SW-Att; VRASED gets to see it.
                if matches!(fault, Fault::SwAttOutOfSession(_)) {
                    let verdict = bank.bank_step(&sig, &self.env());
                    if verdict.violated() {
                        self.cycles += 1;
                        self.reset();
                        bank.on_reset();
                        self.sync_monitor_page(bank);
                        return Ok(StepOutcome {
                            signals: sig,
                            reset: true,
                            violations: verdict.violations,
                            cost: 1,
                            transfer: None,
                            fault: None,
                            report_ready: false,
                        });
                    }
                }
                self.halted = true;
                self.fault = Some(fault.clone());
                return Ok(StepOutcome {
                    signals: sig,
                    reset: false,
                    violations: Vec::new(),
                    cost: 1,
                    transfer: None,
                    fault: Some(fault),
                    report_ready: false,
                });
            }
        };
        let sig = sig.derive_pmem_write(&self.map.pmem);
        let verdict = bank.bank_step(&sig, &self.env());
        let cost = effect.cost;
        self.cycles += cost;
        if verdict.violated() {
            self.reset();
            bank.on_reset();
            self.sync_monitor_page(bank);
            return Ok(StepOutcome {
                signals: sig,
                reset: true,
                violations: verdict.violations,
                cost,
                transfer: None,
                fault: None,
                report_ready: false,
            });
        }

        let transfer = effect.transfer;
        let mut report_ready = false;
        if let Some((regs, zero, carry)) = effect.regs {
            self.regs = regs;
            self.zero = zero;
            self.carry = carry;
        }
        for (addr, value) in effect.writes {
            self.commit_write(addr, value, bank);
        }
        if effect.pop_input {
            self.gpio_in.pop_front();
        }
        if let Some(dma) = effect.dma {
            self.dma = dma;
        }
        if effect.irq_ack {
            self.irq_pending = false;
        }
        if let Some(lmt) = verdict.lmt_update {
            self.mem[page::LMT.start as usize..page::LMT.end() as usize].copy_from_slice(&lmt);
        }
        match effect.swatt {
            Some(SessionUpdate::Continue(s)) => self.swatt_session = Some(s),
            Some(SessionUpdate::Finish(report)) => {
                self.swatt_session = None;
                report_ready = report.is_some();
                self.swatt_report = report;
            }
            None => {}
        }
        if let Some(next) = effect.after_swatt_pc {
            self.regs[0] = next;
        }
        if effect.halt {
            self.halted = true;
        }
        self.sync_monitor_page(bank);
        Ok(StepOutcome {
            signals: sig,
            reset: false,
            violations: Vec::new(),
            cost,
            transfer,
            fault: None,
            report_ready,
        })
    }

    fn plan_dma(&self, sig: &mut BusSignals) -> Result<Effect, Fault> {
        let d = self.dma;
        self.check_access(d.src)?;
        self.check_access(d.dst)?;
        let (value, pop) = self.peek_read(d.src);
        *sig = sig.clone().with_access(MemAccess::dma(d.src, AccessKind::Read));
        *sig = sig.clone().with_access(MemAccess::dma(d.dst, AccessKind::Write));
        let len = d.len - 1;
        Ok(Effect {
            cost: DMA_STEP_CYCLES,
            writes: vec![(d.dst, value)],
            pop_input: pop,
            dma: Some(DmaConfig {
                src: d.src.wrapping_add(2),
                dst: d.dst.wrapping_add(2),
                len,
                active: len > 0,
            }),
            ..Effect::default()
        })
    }

    fn plan_irq(&self, sig: &mut BusSignals) -> Result<Effect, Fault> {
        sig.irq = true;
        let vector = self.read_word(periph::IRQ_VEC);
        if vector == 0 {
            return Ok(Effect { cost: IRQ_ACK_CYCLES, irq_ack: true, ..Effect::default() });
        }
        let sp = self.sp().wrapping_sub(2);
        if !self.map.dmem.contains(sp) {
            return Err(Fault::Stack(sp));
        }
        *sig = sig.clone().with_access(MemAccess::core(sp, AccessKind::Write));
        let mut regs = self.regs;
        regs[1] = sp;
        regs[0] = vector;
        Ok(Effect {
            cost: IRQ_VECTOR_CYCLES,
            regs: Some((regs, self.zero, self.carry)),
            writes: vec![(sp, self.pc())],
            irq_ack: true,
            transfer: Some(Transfer { from: self.pc(), to: vector, kind: TransferKind::Interrupt }),
            ..Effect::default()
        })
    }

    fn plan_swatt(&self, sig: &mut BusSignals, bank: &MonitorBank) -> Result<Effect, Fault> {
        let pc = self.pc();
        let mut session = match &self.swatt_session {
            Some(s) => s.clone(),
            None if pc == self.map.swatt.start => {
                let scope = self.swatt_request.clone().unwrap_or_else(|| AttScope::full_pmem(&self.map));
                SwAttSession { plan: ief::swatt_plan(&scope, &self.map), scope, idx: 0, pending: None }
            }
            None => return Err(Fault::SwAttOutOfSession(pc)),
        };
        let op = session.plan[session.idx];
        if op.pc(&self.map) != pc {
            return Err(Fault::SwAttOutOfSession(pc));
        }
        let mut effect = Effect { cost: op.cycles(), ..Effect::default() };
        match op {
            SwAttOp::KeyRead(addr) | SwAttOp::Sweep(addr) => {
                *sig = sig.clone().with_access(MemAccess::core(addr, AccessKind::Read));
            }
            SwAttOp::Finalize => {
                *sig = sig.clone().with_access(MemAccess::core(periph::ATT_OUT, AccessKind::Write));
                // RATA may have updated the LMT at entry; it is committed by now.
                let exec = bank.exec();
                session.pending = Some(ief::compute_report(self, &session.scope, exec));
            }
            SwAttOp::Entry | SwAttOp::Exit => {}
        }
        session.idx += 1;
        if session.idx == session.plan.len() {
            effect.swatt = Some(SessionUpdate::Finish(session.pending));
            effect.after_swatt_pc = Some(self.map.pmem.start);
            effect.halt = true;
            return Ok(effect);
        }
        effect.after_swatt_pc = Some(session.plan[session.idx].pc(&self.map));
        effect.swatt = Some(SessionUpdate::Continue(session));
        Ok(effect)
    }

    fn plan_core(&self, sig: &mut BusSignals) -> Result<Effect, Fault> {
        let pc = self.pc();
        if pc % 2 != 0 || !(self.map.pmem.contains(pc) || self.map.rom.contains(pc)) {
            return Err(Fault::PcOutOfRange(pc));
        }
        let end = (pc as usize + 4).min(0x10000);
        let insn = Instruction::decode(&self.mem[pc as usize..end])
            .map_err(|e: DecodeError| Fault::Decode { pc, msg: e.to_string() })?;
        let next_pc = pc.wrapping_add(insn.size());
        let mut regs = self.regs;
        let (mut zero, mut carry) = (self.zero, self.carry);
        let reg = |r: Reg| if r == Reg::PC { pc } else { self.regs[r.index()] };
        let mut e = Effect { cost: insn.cycles(), ..Effect::default() };
        regs[0] = next_pc;
        let access = |sig: &mut BusSignals, addr: Address, kind: AccessKind| -> Result<(), Fault> {
            self.check_access(addr)?;
            *sig = sig.clone().with_access(MemAccess::core(addr, kind));
            Ok(())
        };
        let transfer = |to: Address, kind: TransferKind| Some(Transfer { from: pc, to, kind });

        match insn {
            Insn::Nop => {}
            Insn::Halt => {
                regs[0] = pc;
                e.halt = true;
            }
            Insn::Movi { rd, imm } => regs[rd.index()] = imm,
            Insn::Mov { rd, rs } => regs[rd.index()] = reg(rs),
            Insn::Ld { rd, base, off } => {
                let ea = reg(base).wrapping_add(off);
                access(sig, ea, AccessKind::Read)?;
                let (v, pop) = self.peek_read(ea);
                regs[rd.index()] = v;
                e.pop_input = pop;
            }
            Insn::Ldi { rd, addr } => {
                access(sig, addr, AccessKind::Read)?;
                let (v, pop) = self.peek_read(addr);
                regs[rd.index()] = v;
                e.pop_input = pop;
            }
            Insn::St { base, off, rs } => {
                let ea = reg(base).wrapping_add(off);
                access(sig, ea, AccessKind::Write)?;
                e.writes.push((ea, reg(rs)));
            }
            Insn::Sti { addr, rs } => {
                access(sig, addr, AccessKind::Write)?;
                e.writes.push((addr, reg(rs)));
            }
            Insn::Alu { op, rd, rs } => {
                let (a, b) = (reg(rd), reg(rs));
                let (v, c) = match op {
                    AluOp::Add => a.overflowing_add(b),
                    AluOp::Sub => a.overflowing_sub(b),
                    AluOp::And => (a & b, false),
                    AluOp::Xor => (a ^ b, false),
                };
                regs[rd.index()] = v;
                zero = v == 0;
                carry = c;
            }
            Insn::Cmp { ra, rb } => {
                let (v, c) = reg(ra).overflowing_sub(reg(rb));
                zero = v == 0;
                carry = c;
            }
            Insn::Jmp { target } => {
                regs[0] = target;
                e.transfer = transfer(target, TransferKind::Jump);
            }
            Insn::Jcc { cond, target } => {
                let taken = match cond {
                    Cond::Zero => self.zero,
                    Cond::NotZero => !self.zero,
                    Cond::Carry => self.carry,
                };
                if taken {
                    regs[0] = target;
                    e.transfer = transfer(target, TransferKind::Branch);
                }
            }
            Insn::Jmpr { rs } => {
                let target = reg(rs);
                regs[0] = target;
                e.transfer = transfer(target, TransferKind::Indirect);
            }
            Insn::Call { target } => {
                let sp = self.sp().wrapping_sub(2);
                if !self.map.dmem.contains(sp) {
                    return Err(Fault::Stack(sp));
                }
                access(sig, sp, AccessKind::Write)?;
                e.writes.push((sp, next_pc));
                regs[1] = sp;
                regs[0] = target;
                e.transfer = transfer(target, TransferKind::Call);
            }
            Insn::Ret => {
                let sp = self.sp();
                if !self.map.dmem.contains(sp) {
                    return Err(Fault::Stack(sp));
                }
                access(sig, sp, AccessKind::Read)?;
                let target = self.read_word(sp);
                regs[1] = sp.wrapping_add(2);
                regs[0] = target;
                e.transfer = transfer(target, TransferKind::Return);
            }
            Insn::Push { rs } => {
                let sp = self.sp().wrapping_sub(2);
                if !self.map.dmem.contains(sp) {
                    return Err(Fault::Stack(sp));
                }
                access(sig, sp, AccessKind::Write)?;
                e.writes.push((sp, reg(rs)));
                regs[1] = sp;
            }
            Insn::Pop { rd } => {
                let sp = self.sp();
                if !self.map.dmem.contains(sp) {
                    return Err(Fault::Stack(sp));
                }
                access(sig, sp, AccessKind::Read)?;
                regs[1] = sp.wrapping_add(2);
                regs[rd.index()] = self.read_word(sp);
            }
            Insn::In { rd, port } => {
                if !self.map.periph.contains(port) {
                    return Err(Fault::Unmapped(port));
                }
                access(sig, port, AccessKind::Read)?;
                let (v, pop) = self.peek_read(port);
                regs[rd.index()] = v;
                e.pop_input = pop;
            }
            Insn::Out { port, rs } => {
                if !self.map.periph.contains(port) {
                    return Err(Fault::Unmapped(port));
                }
                access(sig, port, AccessKind::Write)?;
                e.writes.push((port, reg(rs)));
            }
        }
        e.regs = Some((regs, zero, carry));
        Ok(e)
    }
}
