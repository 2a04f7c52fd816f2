// Licensed under the Apache-2.0 license

//! Scenario runner, detection matrix and the RATA timing benchmark.

pub mod demo;
pub mod scenario;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::{AsmProgram, Assembled};
use crate::ief::{expected_mac, ief_run, AttReport, AttScope, ScopeMode};
use crate::instrument::{verify_cfa, verify_dfa, Instrumented, OrLogs, Target};
use crate::isa::{Address, Word};
use crate::mcu::{AccessKind, BusSignals, MemAccess, McuState, DEFAULT_KEY};
use crate::memory::MemoryMap;
use crate::monitor::{ApexConfig, MonitorBank, MonitorSet, RataVariant};
use crate::protocol::transport::{mem_duplex, tcp_pair, Transport};
use crate::protocol::{exchange, AttRequest, Frame, Prover, Reason, Verdict, Verifier, ER_STEP_BUDGET};

pub use scenario::{Action, Arch, Column, Event, Expect, Feature, Phase, Scenario, ValueSpec};

/// DMEM area the adversary stages DMA payloads in.
pub const STAGING: Address = 0x3C00;
const STAGING_WORDS: usize = 128;
/// Steps allowed for draining one DMA transfer.
const DMA_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Row {
    ModifiedCode,
    ProvableExecution,
    ControlFlow,
    DataFlow,
    Toctou,
}

impl Row {
    pub const ALL: [Row; 5] = [Row::ModifiedCode, Row::ProvableExecution, Row::ControlFlow, Row::DataFlow, Row::Toctou];

    pub fn label(self) -> &'static str {
        match self {
            Row::ModifiedCode => "Modified Code",
            Row::ProvableExecution => "Provable Execution",
            Row::ControlFlow => "Control-Flow Attack",
            Row::DataFlow => "Data-Flow Attack",
            Row::Toctou => "TOCTOU",
        }
    }
}

/// Reference detection matrix: `true` = detected.
pub fn table1(row: Row, col: Column) -> bool {
    use Column as C;
    match row {
        Row::ModifiedCode => col != C::Baseline,
        Row::ProvableExecution => matches!(col, C::Apex | C::Tinycfa | C::Dialed),
        Row::ControlFlow => matches!(col, C::Tinycfa | C::Dialed),
        Row::DataFlow => col == C::Dialed,
        Row::Toctou => col == C::Rata,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HarnessError {
    #[error("config error{}: {msg}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("{0}: {1}")]
    Io(String, String),
    #[error("incomplete matrix, missing cells: {}", missing.join(", "))]
    IncompleteMatrix { missing: Vec<String> },
    #[error("scenario `{0}`: {1}")]
    Run(String, String),
}

fn config(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config { line: None, msg: msg.into() }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportKind {
    #[default]
    Mem,
    Tcp,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub transport: TransportKind,
    pub seed: u64,
    /// Directory for evidence logs and per-scenario reports.
    pub evidence: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrailEntry {
    pub step: String,
    pub accepted: bool,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub column: Column,
    pub row: Option<Row>,
    pub detected: bool,
    pub reason: Reason,
    pub expected: Expect,
    pub expected_reason: Option<String>,
    pub matches: bool,
    pub trail: Vec<TrailEntry>,
    pub resets: usize,
    /// Evidence log in JSON lines, one record per monitor event.
    #[serde(skip)]
    pub evidence: String,
}

/// Everything the verifier knows about the deployed program.
struct Reference {
    asm: Assembled,
    ins: Option<Instrumented>,
    pox: Option<ApexConfig>,
    /// Expected PMEM contents from `pmem.start`.
    image: Vec<u8>,
}

fn load_program(sc: &Scenario) -> Result<AsmProgram, HarnessError> {
    let text = match demo::source(&sc.program) {
        Some(s) => s.to_string(),
        None => {
            let path = sc.base_dir.join(&sc.program);
            std::fs::read_to_string(&path).map_err(|e| HarnessError::Io(path.display().to_string(), e.to_string()))?
        }
    };
    AsmProgram::parse(&text).map_err(|e| config(format!("{}: {e}", sc.program)))
}

fn build_reference(sc: &Scenario, target: Target) -> Result<Reference, HarnessError> {
    let prog = load_program(sc)?;
    let map = target.map;
    let (asm, ins) = if sc.arch.has(Feature::Tinycfa) {
        let ins = Instrumented::build(&prog, target, sc.arch.has(Feature::Dialed)).map_err(|e| config(e.to_string()))?;
        (ins.assembled.clone(), Some(ins))
    } else {
        (prog.assemble(map.pmem.start).map_err(|e| config(e.to_string()))?, None)
    };
    let pox = if sc.arch.pox() {
        Some(match &ins {
            Some(i) => i.metadata(),
            None => {
                let er = crate::instrument::er_bounds(&asm).map_err(|e| config(e.to_string()))?;
                ApexConfig { or_min: target.layout.or_min, or_max: target.layout.or_max(), ..er }
            }
        })
    } else {
        None
    };
    let image = asm.bytes.clone();
    Ok(Reference { asm, ins, pox, image })
}

fn monitor_set(arch: &Arch) -> MonitorSet {
    let rata = if arch.has(Feature::RataA) {
        Some(RataVariant::A)
    } else if arch.has(Feature::RataB) {
        Some(RataVariant::B)
    } else {
        None
    };
    MonitorSet { vrased: arch.has(Feature::Vrased), rata, apex: arch.has(Feature::Apex) }
}

fn resolve_all(vals: &[ValueSpec], asm: &Assembled) -> Result<Vec<Word>, HarnessError> {
    vals.iter().map(|v| v.resolve(asm).map_err(config)).collect()
}

/// Adversary and device state shared by pre-phase and app-phase events.
struct Adversary<'a> {
    asm: &'a Assembled,
    target: Target,
    saved: Vec<(Address, Vec<Word>)>,
    forge: bool,
    resets: usize,
}

impl Adversary<'_> {
    /// Stages `words` in DMEM and starts DMA into `dst`, in chunks.
    fn dma_write(&mut self, mcu: &mut McuState, bank: &mut MonitorBank, dst: Address, words: &[Word], drain: bool) -> Result<(), HarnessError> {
        for (i, chunk) in words.chunks(STAGING_WORDS).enumerate() {
            for (k, w) in chunk.iter().enumerate() {
                mcu.poke_word(STAGING + 2 * k as u16, *w);
            }
            let to = dst.wrapping_add((i * STAGING_WORDS * 2) as u16);
            mcu.dma_program(STAGING, to, chunk.len() as u16).map_err(|e| config(e.to_string()))?;
            if drain || words.len() > STAGING_WORDS {
                self.drain(mcu, bank);
            }
        }
        Ok(())
    }

    fn drain(&mut self, mcu: &mut McuState, bank: &mut MonitorBank) {
        let idle = mcu.halted;
        for _ in 0..DMA_BUDGET {
            if !mcu.dma.active {
                break;
            }
            match mcu.step(bank) {
                Ok(out) if out.reset => {
                    self.resets += 1;
                    mcu.halted = idle;
                    break;
                }
                Ok(_) => {}
                Err(_) => break,
            }
        }
    }

    fn read_words(mcu: &McuState, addr: Address, n: usize) -> Vec<Word> {
        (0..n).map(|i| mcu.read_word(addr.wrapping_add(2 * i as u16))).collect()
    }

    /// Applies a device-side action. `drain` is set while the core is idle.
    fn apply(&mut self, action: &Action, mcu: &mut McuState, bank: &mut MonitorBank, drain: bool) -> Result<(), HarnessError> {
        match action {
            Action::WriteMem { addr, values } => {
                let a = addr.resolve(self.asm).map_err(config)?;
                let v = resolve_all(values, self.asm)?;
                self.dma_write(mcu, bank, a, &v, drain)?;
            }
            Action::ProgramDma { src, dst, len } => {
                let (s, d) = (src.resolve(self.asm).map_err(config)?, dst.resolve(self.asm).map_err(config)?);
                mcu.dma_program(s, d, *len).map_err(|e| config(e.to_string()))?;
                if drain {
                    self.drain(mcu, bank);
                }
            }
            Action::RaiseIrq => mcu.trigger_interrupt(),
            Action::ReplacePmem { addr, values } => {
                let a = addr.resolve(self.asm).map_err(config)?;
                let v = resolve_all(values, self.asm)?;
                if !self.target.map.pmem.contains_range(a, 2 * v.len() as u32) {
                    return Err(config(format!("replace_pmem at {a:#06x} leaves PMEM")));
                }
                self.saved.push((a, Self::read_words(mcu, a, v.len())));
                self.dma_write(mcu, bank, a, &v, drain)?;
            }
            Action::RestorePmem => {
                while let Some((a, words)) = self.saved.pop() {
                    self.dma_write(mcu, bank, a, &words, true)?;
                }
            }
            Action::CorruptStack { offset, value } => {
                let v = value.resolve(self.asm).map_err(config)?;
                let a = mcu.sp().wrapping_add(*offset);
                self.dma_write(mcu, bank, a, &[v], drain)?;
            }
            Action::FeedInput { values } => {
                mcu.gpio_in.extend(resolve_all(values, self.asm)?);
            }
            Action::ClaimOutput { values } => {
                let v = resolve_all(values, self.asm)?;
                mcu.gpio_out.extend(v.iter().copied());
                self.dma_write(mcu, bank, self.target.layout.output().start, &v, drain)?;
            }
            Action::Forge => self.forge = true,
            Action::AuthorizedUpdate { .. } | Action::Attest => {
                return Err(config("verifier actions are only allowed in the pre phase"));
            }
        }
        Ok(())
    }

    /// Software read of K as seen by the monitors. `None` if the read
    /// triggers a reset.
    fn steal_key(&mut self, mcu: &mut McuState, bank: &mut MonitorBank) -> Option<[u8; 32]> {
        let map = mcu.map;
        let sig = BusSignals::new(map.pmem.start)
            .with_access(MemAccess::core(map.key.start, AccessKind::Read))
            .derive_pmem_write(&map.pmem);
        if bank.bank_step(&sig, &mcu.env()).violated() {
            mcu.reset();
            bank.on_reset();
            self.resets += 1;
            return None;
        }
        Some(mcu.key())
    }

    /// Forged report over the benign image, for a full-PMEM request.
    fn forge_report(&mut self, mcu: &mut McuState, bank: &mut MonitorBank, req: &AttRequest, benign: &[u8]) -> Option<AttReport> {
        if req.scope.mode != ScopeMode::FullPmem {
            return None;
        }
        let key = self.steal_key(mcu, bank)?;
        let mut pmem = benign.to_vec();
        pmem.resize(mcu.map.pmem.len as usize, 0);
        let mut report = AttReport {
            chal: req.chal,
            scope: req.scope.clone(),
            exec: false,
            lmt: [0; 16],
            mac: [0; 32],
            or_bytes: mcu.gpio_out.iter().flat_map(|w| w.to_le_bytes()).collect(),
        };
        report.mac = expected_mac(&key, &report, &[&pmem]);
        Some(report)
    }
}

fn scope_for(arch: &Arch, map: &MemoryMap, pox: Option<&ApexConfig>) -> AttScope {
    match pox {
        Some(cfg) => AttScope::pox(cfg),
        None if arch.has(Feature::RataA) || arch.has(Feature::RataB) => AttScope::lmt_only(),
        None => AttScope::full_pmem(map),
    }
}

struct Session<'a> {
    sc: &'a Scenario,
    reference: Reference,
    target: Target,
    prover: Prover,
    verifier: Verifier,
    opts: &'a RunOptions,
    trail: Vec<TrailEntry>,
}

impl Session<'_> {
    fn verify(&mut self, report: &AttReport) -> Verdict {
        let arch = &self.sc.arch;
        let map = self.target.map;
        let r = &self.reference;
        if let Some(cfg) = r.pox {
            let off = (cfg.er_min - map.pmem.start) as usize;
            let mut er = r.image.get(off..).unwrap_or(&[]).to_vec();
            er.truncate(cfg.er().len as usize);
            let mut v = self.verifier.verify_pox(report, &cfg, &er);
            if let (true, Some(ins)) = (v.accepted, &r.ins) {
                v = match OrLogs::parse(&report.or_bytes, &self.target.layout) {
                    Some(logs) => verify_cfa(ins, &logs.cf_log),
                    None => Verdict::reject(Reason::PathInvalid),
                };
                if v.accepted && arch.has(Feature::Dialed) {
                    v = verify_dfa(ins, &report.or_bytes);
                }
            }
            v
        } else if arch.has(Feature::RataB) {
            self.verifier.verify_rata(report, RataVariant::B)
        } else if arch.has(Feature::RataA) {
            self.verifier.verify_rata(report, RataVariant::A)
        } else {
            self.verifier.verify_ra(report, &map, &r.image)
        }
    }

    /// One request/response round, running the application on the prover
    /// with the app-phase events.
    fn attest(&mut self, step: &str, adv: &mut Adversary<'_>, app_events: &[Event], run_app: bool) -> Result<(), HarnessError> {
        let map = self.target.map;
        let scope = scope_for(&self.sc.arch, &map, self.reference.pox.as_ref());
        let req = self.verifier.issue(scope, self.reference.pox).map_err(|e| HarnessError::Run(self.sc.name.clone(), e.to_string()))?;
        let benign = self.reference.image.clone();
        let prover = &mut self.prover;
        let mut err = None;
        let serve = |req: &AttRequest| -> Frame {
            let pox = req.scope.mode == ScopeMode::Pox;
            if pox {
                prover.arm_pox(req);
            } else {
                prover.mcu.set_pc(map.pmem.start);
            }
            let mut pending: Vec<&Event> = app_events.iter().collect();
            if run_app {
                let start = prover.mcu.cycles;
                let mut fire = |mcu: &mut McuState, bank: &mut MonitorBank| {
                    while let Some(ev) = pending.first() {
                        if mcu.cycles - start < ev.at {
                            break;
                        }
                        if let Err(e) = adv.apply(&ev.action, mcu, bank, false) {
                            err.get_or_insert(e);
                        }
                        pending.remove(0);
                    }
                };
                let mut app_resets = 0;
                prover.run(ER_STEP_BUDGET, &mut fire, |out| app_resets += out.reset as usize);
                adv.resets += app_resets;
            } else {
                prover.mcu.halted = true;
            }
            for ev in pending {
                if let Err(e) = adv.apply(&ev.action, &mut prover.mcu, &mut prover.bank, true) {
                    err.get_or_insert(e);
                }
            }
            if adv.forge {
                if let Some(r) = adv.forge_report(&mut prover.mcu, &mut prover.bank, req, &benign) {
                    return Frame::Response(r);
                }
            }
            prover.attest(req)
        };
        let result = match self.opts.transport {
            TransportKind::Mem => {
                let (mut v, mut p) = mem_duplex();
                exchange(&mut v, &mut p, &req, serve)
            }
            TransportKind::Tcp => {
                let (mut v, mut p) = tcp_pair().map_err(|e| HarnessError::Io("tcp".into(), e.to_string()))?;
                exchange(&mut v as &mut dyn Transport, &mut p, &req, serve)
            }
        };
        if let Some(e) = err {
            return Err(e);
        }
        let verdict = match result {
            Ok(report) => self.verify(&report),
            Err(reason) => Verdict::reject(reason),
        };
        self.trail.push(TrailEntry { step: step.to_string(), accepted: verdict.accepted, reason: verdict.reason });
        Ok(())
    }
}

/// Runs one scenario end to end.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<ScenarioOutcome, HarnessError> {
    let target = Target::default();
    let map = target.map;
    let reference = build_reference(sc, target)?;
    let mut mcu = McuState::load_program(&reference.asm.bytes, map).map_err(|e| config(e.to_string()))?;
    // Idle in ROM until the first request.
    mcu.regs[0] = map.boot_vector;
    mcu.halted = true;
    let bank = MonitorBank::new(monitor_set(&sc.arch), &map);
    let asm = reference.asm.clone();
    let mut session = Session {
        sc,
        reference,
        target,
        prover: Prover::new(mcu, bank),
        verifier: Verifier::new(DEFAULT_KEY, opts.seed),
        opts,
        trail: Vec::new(),
    };
    let mut adv = Adversary { asm: &asm, target, saved: Vec::new(), forge: false, resets: 0 };

    let mut pre: Vec<&Event> = sc.events.iter().filter(|e| e.phase == Phase::Pre).collect();
    pre.sort_by_key(|e| e.at);
    let mut app: Vec<Event> = sc.events.iter().filter(|e| e.phase == Phase::App).cloned().collect();
    app.sort_by_key(|e| e.at);

    for (i, ev) in pre.iter().enumerate() {
        let mcu = &mut session.prover.mcu;
        mcu.cycles = mcu.cycles.max(ev.at);
        match &ev.action {
            Action::Attest => session.attest(&format!("attest#{i}"), &mut adv, &[], false)?,
            Action::AuthorizedUpdate { addr, values } => {
                let a = addr.resolve(&asm).map_err(config)?;
                let v = resolve_all(values, &asm)?;
                let off = a.wrapping_sub(map.pmem.start) as usize;
                let img = &mut session.reference.image;
                let bytes: Vec<u8> = v.iter().flat_map(|w| w.to_le_bytes()).collect();
                if img.len() < off + bytes.len() {
                    img.resize(off + bytes.len(), 0);
                }
                img[off..off + bytes.len()].copy_from_slice(&bytes);
                let p = &mut session.prover;
                adv.dma_write(&mut p.mcu, &mut p.bank, a, &v, true)?;
                session.verifier.authorize_update(p.mcu.cycles);
            }
            action => {
                let p = &mut session.prover;
                adv.apply(action, &mut p.mcu, &mut p.bank, true)?;
            }
        }
    }
    session.attest("final", &mut adv, &app, sc.run_app)?;

    let last = session.trail.last().expect("final attestation recorded");
    let detected = !last.accepted;
    let reason = last.reason;
    let mut matches = detected == (sc.expect == Expect::Detected);
    if let Some(want) = &sc.expect_reason {
        matches &= format!("{reason:?}") == *want;
    }
    let mut evidence = Vec::new();
    session.prover.bank.write_evidence(&mut evidence).expect("writing to memory");
    let outcome = ScenarioOutcome {
        name: sc.name.clone(),
        column: sc.arch.column(),
        row: sc.row,
        detected,
        reason,
        expected: sc.expect,
        expected_reason: sc.expect_reason.clone(),
        matches,
        trail: session.trail,
        resets: adv.resets,
        evidence: String::from_utf8(evidence).expect("JSON is UTF-8"),
    };
    if let Some(dir) = &opts.evidence {
        write_outcome(dir, &outcome)?;
    }
    Ok(outcome)
}

fn io_err(path: &Path, e: impl ToString) -> HarnessError {
    HarnessError::Io(path.display().to_string(), e.to_string())
}

fn write_outcome(dir: &Path, o: &ScenarioOutcome) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let ev = dir.join(format!("{}.evidence.jsonl", o.name));
    std::fs::write(&ev, &o.evidence).map_err(|e| io_err(&ev, e))?;
    let rep = dir.join(format!("{}.report.json", o.name));
    let json = serde_json::to_string_pretty(o).expect("outcome serializes");
    std::fs::write(&rep, json + "\n").map_err(|e| io_err(&rep, e))
}

pub fn run_scenario_file(path: &Path, opts: &RunOptions) -> Result<ScenarioOutcome, HarnessError> {
    run_scenario(&Scenario::load(path)?, opts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub row: Row,
    pub column: Column,
    pub scenario: String,
    pub detected: bool,
    pub expected: bool,
    pub reason: Reason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixReport {
    pub cells: Vec<MatrixCell>,
    pub matches_table1: bool,
}

impl MatrixReport {
    pub fn cell(&self, row: Row, col: Column) -> Option<&MatrixCell> {
        self.cells.iter().find(|c| c.row == row && c.column == col)
    }

    pub fn deviations(&self) -> Vec<&MatrixCell> {
        self.cells.iter().filter(|c| c.detected != c.expected).collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:<20}", "");
        for c in Column::ALL {
            let _ = write!(s, " {:>9}", c.label());
        }
        s.push('\n');
        for r in Row::ALL {
            let _ = write!(s, "{:<20}", r.label());
            for c in Column::ALL {
                let mark = match self.cell(r, c) {
                    Some(cell) if cell.detected != cell.expected => if cell.detected { "✓!" } else { "✗!" },
                    Some(cell) => if cell.detected { "✓" } else { "✗" },
                    None => "?",
                };
                let _ = write!(s, " {mark:>9}");
            }
            s.push('\n');
        }
        s
    }
}

/// Loads every `*.toml` in `dir`, runs the ones placed in the matrix and
/// compares against the reference table.
pub fn run_matrix(dir: &Path, opts: &RunOptions) -> Result<MatrixReport, HarnessError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let mut placed: BTreeMap<(Row, Column), Scenario> = BTreeMap::new();
    for p in &paths {
        let sc = Scenario::load(p)?;
        if let Some(row) = sc.row {
            let key = (row, sc.arch.column());
            if placed.contains_key(&key) {
                return Err(config(format!("{}: duplicate cell {} / {}", p.display(), row.label(), key.1)));
            }
            placed.insert(key, sc);
        }
    }
    let missing: Vec<String> = Row::ALL
        .iter()
        .flat_map(|r| Column::ALL.iter().map(move |c| (*r, *c)))
        .filter(|k| !placed.contains_key(k))
        .map(|(r, c)| format!("{} / {c}", r.label()))
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::IncompleteMatrix { missing });
    }
    let outcomes: Vec<Result<ScenarioOutcome, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = placed.values().map(|sc| s.spawn(move || run_scenario(sc, opts))).collect();
        handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
    });
    let mut cells = Vec::new();
    for ((row, column), out) in placed.keys().zip(outcomes) {
        let out = out?;
        cells.push(MatrixCell {
            row: *row,
            column: *column,
            scenario: out.name,
            detected: out.detected,
            expected: table1(*row, *column),
            reason: out.reason,
        });
    }
    let matches_table1 = cells.iter().all(|c| c.detected == c.expected);
    let report = MatrixReport { cells, matches_table1 };
    if let Some(ev) = &opts.evidence {
        let path = ev.join("matrix.json");
        std::fs::create_dir_all(ev).map_err(|e| io_err(ev, e))?;
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&path, json + "\n").map_err(|e| io_err(&path, e))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RataBenchRow {
    pub pmem_kib: u32,
    pub full_cycles: u64,
    pub lmt_cycles: u64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RataBench {
    pub rows: Vec<RataBenchRow>,
    pub lmt_constant: bool,
    pub full_affine: bool,
}

impl RataBench {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:>8} {:>12} {:>10} {:>8}\n", "pmem", "full", "lmt_only", "ratio");
        for r in &self.rows {
            let _ = writeln!(s, "{:>5}KiB {:>12} {:>10} {:>8.2}", r.pmem_kib, r.full_cycles, r.lmt_cycles, r.ratio);
        }
        let _ = writeln!(s, "lmt_only constant: {}  full sweep affine: {}", self.lmt_constant, self.full_affine);
        s
    }
}

/// IEF cycles for a full-PMEM sweep and for LMT-only attestation under
/// RATA_B, per PMEM size.
pub fn bench_rata(sizes_kib: &[u32]) -> Result<RataBench, HarnessError> {
    let mut rows = Vec::new();
    for &kib in sizes_kib {
        let map = MemoryMap::with_pmem_size(kib * 1024);
        let cycles = |scope: AttScope| -> Result<u64, HarnessError> {
            let mut st = McuState::load_program(&[], map).map_err(|e| config(e.to_string()))?;
            let mut bank = MonitorBank::new(MonitorSet { vrased: true, rata: Some(RataVariant::B), apex: false }, &map);
            ief_run(&mut st, &mut bank, &[1; 16], &scope)
                .map(|r| r.cycles)
                .map_err(|e| HarnessError::Run("bench".into(), e.to_string()))
        };
        let full_cycles = cycles(AttScope::full_pmem(&map))?;
        let lmt_cycles = cycles(AttScope::lmt_only())?;
        rows.push(RataBenchRow { pmem_kib: kib, full_cycles, lmt_cycles, ratio: full_cycles as f64 / lmt_cycles as f64 });
    }
    let lmt_constant = rows.windows(2).all(|w| w[0].lmt_cycles == w[1].lmt_cycles);
    // Affine: equal per-KiB slope between every consecutive pair.
    let slopes: Vec<Option<u64>> = rows
        .windows(2)
        .map(|w| {
            let (dk, dc) = (w[1].pmem_kib.checked_sub(w[0].pmem_kib)?, w[1].full_cycles.checked_sub(w[0].full_cycles)?);
            (dk > 0 && dc % dk as u64 == 0).then(|| dc / dk as u64)
        })
        .collect();
    let full_affine = slopes.iter().all(|s| s.is_some() && *s == slopes[0]);
    Ok(RataBench { rows, lmt_constant, full_affine })
}
