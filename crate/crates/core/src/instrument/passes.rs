// Licensed under the Apache-2.0 license

use std::collections::BTreeMap;

use crate::asm::{AsmProgram, Assembled, Stmt, StmtKind, SymInsn, Tag, Value};
use crate::isa::{AluOp, Cond, Insn, Instruction, Reg};

use super::{er_bounds, InstrumentError, Target, ABORT, ER_DONE, ER_EXIT, ER_START, SCRATCH_A as R6, SCRATCH_B as R7};

fn num(v: u16) -> Value {
    Value::Num(v)
}

fn sym(name: &str) -> Value {
    Value::sym(name)
}

/// Zero-size statement that only carries labels.
fn marker(label: String) -> Stmt {
    Stmt {
        labels: vec![label],
        kind: StmtKind::Equ(String::new(), num(0)),
        line: 0,
        tag: Tag::Stub,
        targets: Vec::new(),
        writes: None,
    }
}

/// Collects the statements of one group, all tagged alike.
struct Emitter {
    out: Vec<Stmt>,
    tag: Tag,
    line: usize,
    labels: Vec<String>,
}

impl Emitter {
    fn push(&mut self, insn: SymInsn) {
        self.push_stmt(Stmt::insn(insn));
    }

    fn push_stmt(&mut self, mut stmt: Stmt) {
        stmt.tag = match stmt.tag {
            Tag::Source => self.tag,
            t => t,
        };
        stmt.line = self.line;
        let mut labels = std::mem::take(&mut self.labels);
        labels.append(&mut stmt.labels);
        stmt.labels = labels;
        self.out.push(stmt);
    }

    fn label(&mut self, l: String) {
        self.labels.push(l);
    }

    fn finish(mut self) -> Vec<Stmt> {
        if !self.labels.is_empty() {
            let labels = std::mem::take(&mut self.labels);
            for l in labels {
                self.out.push(marker(l));
            }
        }
        self.out
    }
}

struct Labels(usize);

impl Labels {
    fn fresh(&mut self, kind: &str) -> String {
        self.0 += 1;
        format!("__{kind}{}", self.0)
    }
}

fn mov(rd: Reg, rs: Reg) -> SymInsn {
    Insn::Mov { rd, rs }
}

fn movi(rd: Reg, imm: Value) -> SymInsn {
    Insn::Movi { rd, imm }
}

fn cmp(ra: Reg, rb: Reg) -> SymInsn {
    Insn::Cmp { ra, rb }
}

fn add(rd: Reg, rs: Reg) -> SymInsn {
    Insn::Alu { op: AluOp::Add, rd, rs }
}

fn jcc(cond: Cond, target: &str) -> SymInsn {
    Insn::Jcc { cond, target: sym(target) }
}

fn jmp(target: Value) -> SymInsn {
    Insn::Jmp { target }
}

/// Does some conditional branch read the flags as they are before
/// statement `at`, without an intervening flag update?
fn flags_live_after(stmts: &[Stmt], at: usize) -> bool {
    for stmt in &stmts[at + 1..] {
        match stmt.as_insn() {
            Some(Insn::Alu { .. } | Insn::Cmp { .. }) => return false,
            Some(Insn::Jcc { .. }) => return true,
            Some(Insn::Jmp { .. } | Insn::Ret | Insn::Jmpr { .. } | Insn::Halt | Insn::Call { .. }) => return false,
            _ => {}
        }
    }
    false
}

fn uses_scratch(insn: &SymInsn) -> bool {
    insn.regs().iter().any(|r| *r == R6 || *r == R7)
}

/// Source statement index → resolved instruction, for ER statements only.
fn er_statements(asm: &Assembled) -> Result<BTreeMap<usize, Instruction>, InstrumentError> {
    let er = er_bounds(asm)?;
    Ok(asm
        .instrs
        .iter()
        .filter(|(a, _, _)| *a >= er.er_min && *a <= er.er_max)
        .map(|(_, i, s)| (*s, *i))
        .collect())
}

/// Sequence that appends the destination produced by `dest` to CF-Log,
/// aborting when the log is full.
fn emit_cf_log(e: &mut Emitter, labels: &mut Labels, target: &Target, dest: SymInsn) {
    let l = &target.layout;
    let ok = labels.fresh("cfok");
    e.push(Insn::Ldi { rd: R6, addr: num(l.cf_cursor()) });
    e.push(movi(R7, num(l.cf_end())));
    e.push(cmp(R6, R7));
    e.push(jcc(Cond::Carry, &ok));
    e.push(jmp(sym(ABORT)));
    e.label(ok);
    e.push(dest);
    e.push(Insn::St { base: R6, off: num(0), rs: R7 });
    e.push(movi(R7, num(2)));
    e.push(add(R6, R7));
    e.push(Insn::Sti { addr: num(l.cf_cursor()), rs: R6 });
}

/// Tiny-CFA pass: logs the destination of every control transfer inside
/// ER and range-checks indirect stores against the protected log area.
pub fn instrument_cfa(prog: &AsmProgram, target: &Target) -> Result<AsmProgram, InstrumentError> {
    target.layout.validate(&target.map)?;
    let asm = prog.assemble(target.map.pmem.start)?;
    let er_stmts = er_statements(&asm)?;
    let exit_idx = asm.stmt_at(asm.symbol(ER_EXIT).unwrap()).ok_or(InstrumentError::BadExit)?;
    let start_idx = asm.stmt_at(asm.symbol(ER_START).unwrap()).ok_or(InstrumentError::MissingLabel(ER_START))?;
    let l = target.layout;
    let protected = l.protected();
    let mut labels = Labels(0);
    let mut out = Vec::new();

    for (i, stmt) in prog.stmts.iter().enumerate() {
        let mut stmt = stmt.clone();
        if let Some(insn) = stmt.as_insn() {
            if uses_scratch(insn) {
                return Err(InstrumentError::ReservedRegister(stmt.line));
            }
        }
        if stmt.labels.iter().any(|x| x == ER_DONE) {
            stmt.labels.push(ABORT.to_string());
        }
        let Some(resolved) = er_stmts.get(&i).copied() else {
            out.push(stmt.with_tag(Tag::Original(i)));
            continue;
        };
        let mut e = Emitter { out: Vec::new(), tag: Tag::Guard(i), line: stmt.line, labels: Vec::new() };
        let mut own_labels = std::mem::take(&mut stmt.labels);
        if i == start_idx {
            own_labels.retain(|x| x != ER_START);
            e.label(ER_START.to_string());
            e.tag = Tag::Stub;
            e.push(movi(R6, num(l.cf_base())));
            e.push(Insn::Sti { addr: num(l.cf_cursor()), rs: R6 });
            e.push(movi(R6, num(l.i_base())));
            e.push(Insn::Sti { addr: num(l.i_cursor()), rs: R6 });
            e.tag = Tag::Guard(i);
        }
        for lab in own_labels {
            e.label(lab);
        }
        let original = stmt.clone().with_tag(Tag::Original(i));
        let insn = stmt.as_insn().cloned().expect("ER statements are instructions");
        if i == exit_idx {
            if insn.is_control_transfer() || insn.size() != 2 {
                return Err(InstrumentError::BadExit);
            }
            e.push_stmt(original);
            out.extend(e.finish());
            continue;
        }
        match insn {
            Insn::Jmp { target: t } | Insn::Call { target: t } => {
                emit_cf_log(&mut e, &mut labels, target, movi(R7, t));
                e.push_stmt(original);
            }
            Insn::Ret => {
                emit_cf_log(&mut e, &mut labels, target, Insn::Ld { rd: R7, base: Reg::SP, off: num(0) });
                e.push_stmt(original);
            }
            Insn::Jmpr { rs } => {
                if stmt.targets.is_empty() {
                    return Err(InstrumentError::MissingTargets(stmt.line));
                }
                emit_cf_log(&mut e, &mut labels, target, mov(R7, rs));
                e.push_stmt(original);
            }
            Insn::Jcc { cond, target: t } => {
                let ft = labels.fresh("ft");
                match cond {
                    Cond::Zero | Cond::NotZero => {
                        let inverse = if cond == Cond::Zero { Cond::NotZero } else { Cond::Zero };
                        e.push(jcc(inverse, &ft));
                    }
                    Cond::Carry => {
                        let taken = labels.fresh("tk");
                        e.push(jcc(Cond::Carry, &taken));
                        e.push(jmp(sym(&ft)));
                        e.label(taken);
                    }
                }
                emit_cf_log(&mut e, &mut labels, target, movi(R7, t.clone()));
                let mut j = Stmt::insn(jmp(t)).with_tag(Tag::Original(i));
                j.line = stmt.line;
                e.push_stmt(j);
                e.label(ft);
            }
            Insn::Sti { .. } => {
                if let Instruction::Sti { addr, .. } = resolved {
                    if protected.contains(addr) || protected.contains(addr.wrapping_add(1)) {
                        return Err(InstrumentError::DirectLogWrite { line: stmt.line, addr });
                    }
                }
                e.push_stmt(original);
            }
            Insn::St { base, off, .. } => {
                if base == Reg::PC {
                    return Err(InstrumentError::ReservedRegister(stmt.line));
                }
                if flags_live_after(&prog.stmts, i) {
                    return Err(InstrumentError::FlagsClobbered(stmt.line));
                }
                let ok = labels.fresh("stok");
                e.push(mov(R6, base));
                if off != num(0) {
                    e.push(movi(R7, off));
                    e.push(add(R6, R7));
                }
                e.push(movi(R7, num(protected.start)));
                e.push(cmp(R6, R7));
                e.push(jcc(Cond::Carry, &ok));
                e.push(movi(R7, num(protected.last())));
                e.push(cmp(R7, R6));
                e.push(jcc(Cond::Carry, &ok));
                e.push(jmp(sym(ABORT)));
                e.label(ok);
                e.push_stmt(original);
            }
            _ => e.push_stmt(original),
        }
        out.extend(e.finish());
    }
    let prog = AsmProgram { stmts: out };
    check_fits(&prog, target)?;
    Ok(prog)
}

/// DIALED pass over a CFA-instrumented program: logs `(address, value)` for
/// every non-local read and every `IN`.
pub fn instrument_dfa(prog: &AsmProgram, target: &Target) -> Result<AsmProgram, InstrumentError> {
    if !prog.stmts.iter().any(|s| s.labels.iter().any(|l| l == ABORT)) {
        return Err(InstrumentError::NotCfaInstrumented);
    }
    let l = target.layout;
    let stack_base = target.map.stack_base();
    let mut labels = Labels(0);
    let mut out = Vec::new();
    for (at, stmt) in prog.stmts.iter().enumerate() {
        let (Tag::Original(i), Some(insn)) = (stmt.tag, stmt.as_insn()) else {
            out.push(stmt.clone());
            continue;
        };
        let (rd, port) = match insn {
            Insn::Ld { rd, .. } | Insn::Ldi { rd, .. } => (*rd, None),
            Insn::In { rd, port } => (*rd, Some(port.clone())),
            _ => {
                out.push(stmt.clone());
                continue;
            }
        };
        if !in_er(prog, at) {
            out.push(stmt.clone());
            continue;
        }
        if flags_live_after(&prog.stmts, at) {
            return Err(InstrumentError::FlagsClobbered(stmt.line));
        }
        let mut e = Emitter { out: Vec::new(), tag: Tag::Guard(i), line: stmt.line, labels: stmt.labels.clone() };
        let mut original = stmt.clone();
        original.labels.clear();
        let n = labels.fresh("");
        let (nonlocal, skip, yes, go, done, ok) =
            (format!("{n}nl"), format!("{n}sk"), format!("{n}y"), format!("{n}go"), format!("{n}dn"), format!("{n}ok"));

        if port.is_none() {
            match insn {
                Insn::Ld { base, off, .. } => {
                    if *base == Reg::PC {
                        return Err(InstrumentError::ReservedRegister(stmt.line));
                    }
                    e.push(mov(R6, *base));
                    if *off != num(0) {
                        e.push(movi(R7, off.clone()));
                        e.push(add(R6, R7));
                    }
                }
                Insn::Ldi { addr, .. } => e.push(movi(R6, addr.clone())),
                _ => unreachable!(),
            }
            e.push(Insn::Sti { addr: num(l.i_scratch()), rs: R6 });
            e.push(cmp(R6, Reg::SP));
            e.push(jcc(Cond::Carry, &nonlocal));
            e.push(movi(R7, num(stack_base)));
            e.push(cmp(R7, R6));
            e.push(jcc(Cond::Carry, &nonlocal));
            e.push(jmp(sym(&skip)));
            e.label(nonlocal);
            e.push(movi(R7, sym(ER_START)));
            e.push(cmp(R6, R7));
            e.push(jcc(Cond::Carry, &yes));
            e.push(movi(R7, Value::Sym { name: ER_EXIT.into(), offset: 1 }));
            e.push(cmp(R7, R6));
            e.push(jcc(Cond::Carry, &yes));
            e.label(skip);
            e.push(movi(R6, num(0)));
            e.push(jmp(sym(&go)));
            e.label(yes);
            e.push(movi(R6, num(1)));
            e.label(go);
        }
        e.push_stmt(original);
        if port.is_none() {
            e.push(movi(R7, num(0)));
            e.push(cmp(R6, R7));
            e.push(jcc(Cond::Zero, &done));
        }
        e.push(Insn::Ldi { rd: R6, addr: num(l.i_cursor()) });
        e.push(movi(R7, num(l.i_end() - 3)));
        e.push(cmp(R6, R7));
        e.push(jcc(Cond::Carry, &ok));
        e.push(jmp(sym(ABORT)));
        e.label(ok);
        e.push(Insn::St { base: R6, off: num(2), rs: rd });
        match port {
            Some(p) => e.push(movi(R7, p)),
            None => e.push(Insn::Ldi { rd: R7, addr: num(l.i_scratch()) }),
        }
        e.push(Insn::St { base: R6, off: num(0), rs: R7 });
        e.push(movi(R7, num(4)));
        e.push(add(R6, R7));
        e.push(Insn::Sti { addr: num(l.i_cursor()), rs: R6 });
        e.label(done);
        out.extend(e.finish());
    }
    let prog = AsmProgram { stmts: out };
    check_fits(&prog, target)?;
    Ok(prog)
}

/// Statement `at` lies between the `er_start` and `er_exit` labels.
fn in_er(prog: &AsmProgram, at: usize) -> bool {
    let find = |name: &str| prog.stmts.iter().position(|s| s.labels.iter().any(|l| l == name));
    match (find(ER_START), find(ER_EXIT)) {
        (Some(s), Some(x)) => at >= s && at <= x,
        _ => false,
    }
}

fn check_fits(prog: &AsmProgram, target: &Target) -> Result<(), InstrumentError> {
    let asm = prog.assemble(target.map.pmem.start)?;
    let size = asm.end() - target.map.pmem.start as u32;
    if asm.end() > target.map.pmem.end() {
        return Err(InstrumentError::CodeTooLargeForEr { size, capacity: target.map.pmem.len });
    }
    er_bounds(&asm)?;
    Ok(())
}
