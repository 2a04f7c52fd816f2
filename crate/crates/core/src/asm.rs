// Licensed under the Apache-2.0 license

//! Assembly text format.
//!
//! One statement per line. `label:` may stand alone or prefix a statement, and
//! `;` starts a comment. Directives:
//!
//! * `.org ADDR` places the next statement at `ADDR`.
//! * `.word V` / `.byte V` emit raw data.
//! * `.equ NAME, V` defines a constant.
//! * `.targets L1, L2, ...` declares the legal destinations of the next `JMPR`.
//! * `.object NAME, ADDR, LEN` declares a data object in DMEM.
//! * `.writes NAME` declares that the next store only ever writes object `NAME`.
//!
//! Operands: registers `R0`..`R7` (aliases `PC`, `SP`), immediates `#V`,
//! memory `[Rn+V]`, `[Rn-V]`, `[Rn]`, `[V]`. A value `V` is a number
//! (decimal, `0x` hex, `0b` binary, optionally negative) or a symbol with an
//! optional `+N`/`-N` offset.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::isa::{Address, AluOp, Cond, Insn, Instruction, Reg};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Num(u16),
    Sym { name: String, offset: i32 },
}

impl Value {
    pub fn sym(name: impl Into<String>) -> Value {
        Value::Sym { name: name.into(), offset: 0 }
    }

    fn resolve(&self, symbols: &BTreeMap<String, u16>, line: usize) -> Result<u16, AsmError> {
        match self {
            Value::Num(n) => Ok(*n),
            Value::Sym { name, offset } => symbols
                .get(name)
                .map(|&v| (v as i32).wrapping_add(*offset) as u16)
                .ok_or_else(|| AsmError::new(line, AsmErrorKind::UnresolvedSymbol(name.clone()))),
        }
    }
}

impl From<u16> for Value {
    fn from(n: u16) -> Self {
        Value::Num(n)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Num(n) => write!(f, "{n:#06x}"),
            Value::Sym { name, offset: 0 } => write!(f, "{name}"),
            Value::Sym { name, offset } if *offset > 0 => write!(f, "{name}+{offset}"),
            Value::Sym { name, offset } => write!(f, "{name}{offset}"),
        }
    }
}

pub type SymInsn = Insn<Value>;

/// Provenance of a statement, used by the instrumentation passes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Tag {
    #[default]
    Source,
    /// Statement `i` of the uninstrumented program.
    Original(usize),
    /// Code inserted in front of original statement `i`.
    Guard(usize),
    /// Code inserted that belongs to no original statement (abort stub).
    Stub,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Insn(SymInsn),
    Word(Value),
    Byte(u8),
    Org(Value),
    Equ(String, Value),
    Object { name: String, addr: Value, len: Value },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub labels: Vec<String>,
    pub kind: StmtKind,
    pub line: usize,
    pub tag: Tag,
    /// `.targets` annotation, only meaningful on `JMPR`.
    pub targets: Vec<Value>,
    /// `.writes` annotation, only meaningful on stores.
    pub writes: Option<String>,
}

impl Stmt {
    pub fn insn(insn: SymInsn) -> Stmt {
        Stmt {
            labels: Vec::new(),
            kind: StmtKind::Insn(insn),
            line: 0,
            tag: Tag::Source,
            targets: Vec::new(),
            writes: None,
        }
    }

    pub fn with_tag(mut self, tag: Tag) -> Stmt {
        self.tag = tag;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Stmt {
        self.labels.push(label.into());
        self
    }

    pub fn as_insn(&self) -> Option<&SymInsn> {
        match &self.kind {
            StmtKind::Insn(i) => Some(i),
            _ => None,
        }
    }

    fn size(&self) -> u16 {
        match &self.kind {
            StmtKind::Insn(i) => i.size(),
            StmtKind::Word(_) => 2,
            StmtKind::Byte(_) => 1,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AsmErrorKind {
    Syntax(String),
    UnknownMnemonic(String),
    DuplicateLabel(String),
    UnresolvedSymbol(String),
    OrgOutOfRange(u16),
    Overlap(u16),
    DanglingAnnotation(&'static str),
    UnknownObject(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind:?}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

impl AsmError {
    fn new(line: usize, kind: AsmErrorKind) -> Self {
        AsmError { line, kind }
    }

    fn syntax(line: usize, msg: impl Into<String>) -> Self {
        AsmError::new(line, AsmErrorKind::Syntax(msg.into()))
    }
}

/// Declared data object (from `.object`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataObject {
    pub addr: Address,
    pub len: u16,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AsmProgram {
    pub stmts: Vec<Stmt>,
}

/// Result of assembling: image bytes starting at `base`, plus per-statement addresses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembled {
    pub base: Address,
    pub bytes: Vec<u8>,
    /// Address of each statement (statements without size get the address
    /// of whatever follows them).
    pub addrs: Vec<Address>,
    pub symbols: BTreeMap<String, u16>,
    pub objects: BTreeMap<String, DataObject>,
    /// Resolved `.targets` sets keyed by the JMPR address.
    pub indirect_targets: BTreeMap<Address, Vec<Address>>,
    /// Resolved `.writes` annotations keyed by the store address.
    pub store_objects: BTreeMap<Address, String>,
    /// Every assembled instruction with its address and statement index.
    pub instrs: Vec<(Address, Instruction, usize)>,
}

impl Assembled {
    pub fn symbol(&self, name: &str) -> Option<Address> {
        self.symbols.get(name).copied()
    }

    pub fn end(&self) -> u32 {
        self.base as u32 + self.bytes.len() as u32
    }

    /// Statement index of the instruction at `addr`.
    pub fn stmt_at(&self, addr: Address) -> Option<usize> {
        self.instrs
            .binary_search_by_key(&addr, |(a, _, _)| *a)
            .ok()
            .map(|i| self.instrs[i].2)
    }
}

impl AsmProgram {
    pub fn parse(text: &str) -> Result<AsmProgram, AsmError> {
        let mut stmts = Vec::new();
        let mut pending_labels: Vec<String> = Vec::new();
        let mut pending_targets: Option<(usize, Vec<Value>)> = None;
        let mut pending_writes: Option<(usize, String)> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let mut rest = raw.split(';').next().unwrap_or("").trim();
            while let Some(colon) = label_prefix(rest) {
                let name = rest[..colon].trim();
                check_ident(name, line)?;
                pending_labels.push(name.to_string());
                rest = rest[colon + 1..].trim();
            }
            if rest.is_empty() {
                continue;
            }
            let (head, args) = match rest.find(char::is_whitespace) {
                Some(i) => (&rest[..i], rest[i..].trim()),
                None => (rest, ""),
            };
            let head_lc = head.to_ascii_lowercase();
            let kind = match head_lc.as_str() {
                ".targets" => {
                    let vals = split_args(args)
                        .into_iter()
                        .map(|a| parse_value(a, line))
                        .collect::<Result<Vec<_>, _>>()?;
                    pending_targets = Some((line, vals));
                    continue;
                }
                ".writes" => {
                    check_ident(args, line)?;
                    pending_writes = Some((line, args.to_string()));
                    continue;
                }
                ".org" => StmtKind::Org(parse_value(args, line)?),
                ".word" => StmtKind::Word(parse_value(args, line)?),
                ".byte" => {
                    let v = parse_value(args, line)?;
                    match v {
                        Value::Num(n) if n <= 0xFF => StmtKind::Byte(n as u8),
                        _ => return Err(AsmError::syntax(line, "byte value out of range")),
                    }
                }
                ".equ" => {
                    let parts = split_args(args);
                    if parts.len() != 2 {
                        return Err(AsmError::syntax(line, ".equ takes NAME, VALUE"));
                    }
                    check_ident(parts[0], line)?;
                    StmtKind::Equ(parts[0].to_string(), parse_value(parts[1], line)?)
                }
                ".object" => {
                    let parts = split_args(args);
                    if parts.len() != 3 {
                        return Err(AsmError::syntax(line, ".object takes NAME, ADDR, LEN"));
                    }
                    check_ident(parts[0], line)?;
                    StmtKind::Object {
                        name: parts[0].to_string(),
                        addr: parse_value(parts[1], line)?,
                        len: parse_value(parts[2], line)?,
                    }
                }
                _ if head.starts_with('.') => {
                    return Err(AsmError::new(line, AsmErrorKind::UnknownMnemonic(head.to_string())))
                }
                _ => StmtKind::Insn(parse_insn(&head_lc, args, line)?),
            };
            let mut stmt = Stmt {
                labels: std::mem::take(&mut pending_labels),
                kind,
                line,
                tag: Tag::Source,
                targets: Vec::new(),
                writes: None,
            };
            if let StmtKind::Insn(insn) = &stmt.kind {
                if matches!(insn, Insn::Jmpr { .. }) {
                    if let Some((_, t)) = pending_targets.take() {
                        stmt.targets = t;
                    }
                }
                if matches!(insn, Insn::St { .. } | Insn::Sti { .. }) {
                    if let Some((_, w)) = pending_writes.take() {
                        stmt.writes = Some(w);
                    }
                }
            }
            if let Some((l, _)) = pending_targets {
                return Err(AsmError::new(l, AsmErrorKind::DanglingAnnotation(".targets")));
            }
            if let Some((l, _)) = pending_writes {
                return Err(AsmError::new(l, AsmErrorKind::DanglingAnnotation(".writes")));
            }
            stmts.push(stmt);
        }
        if let Some((l, _)) = pending_targets {
            return Err(AsmError::new(l, AsmErrorKind::DanglingAnnotation(".targets")));
        }
        if let Some((l, _)) = pending_writes {
            return Err(AsmError::new(l, AsmErrorKind::DanglingAnnotation(".writes")));
        }
        if !pending_labels.is_empty() {
            // Trailing labels mark the end of the program.
            stmts.push(Stmt {
                labels: pending_labels,
                kind: StmtKind::Equ(String::new(), Value::Num(0)),
                line: text.lines().count(),
                tag: Tag::Source,
                targets: Vec::new(),
                writes: None,
            });
        }
        Ok(AsmProgram { stmts })
    }

    /// Two-pass assembly. Code without a leading `.org` starts at `base`;
    /// nothing may be placed below `base`.
    pub fn assemble(&self, base: Address) -> Result<Assembled, AsmError> {
        // Pass 1: addresses and labels. `.org` and `.equ` may only use numbers
        // or symbols defined earlier.
        let mut symbols = BTreeMap::new();
        let mut addrs = Vec::with_capacity(self.stmts.len());
        let mut pc: u32 = base as u32;
        for stmt in &self.stmts {
            match &stmt.kind {
                StmtKind::Org(v) => {
                    let target = v.resolve(&symbols, stmt.line)?;
                    if target < base {
                        return Err(AsmError::new(stmt.line, AsmErrorKind::OrgOutOfRange(target)));
                    }
                    pc = target as u32;
                }
                StmtKind::Equ(name, v) if !name.is_empty() => {
                    let value = v.resolve(&symbols, stmt.line)?;
                    if symbols.insert(name.clone(), value).is_some() {
                        return Err(AsmError::new(stmt.line, AsmErrorKind::DuplicateLabel(name.clone())));
                    }
                }
                _ => {}
            }
            if pc > 0xFFFF {
                return Err(AsmError::new(stmt.line, AsmErrorKind::OrgOutOfRange(0xFFFF)));
            }
            for label in &stmt.labels {
                if symbols.insert(label.clone(), pc as u16).is_some() {
                    return Err(AsmError::new(stmt.line, AsmErrorKind::DuplicateLabel(label.clone())));
                }
            }
            addrs.push(pc as u16);
            pc += stmt.size() as u32;
            if pc > 0x10000 {
                return Err(AsmError::new(stmt.line, AsmErrorKind::OrgOutOfRange(0xFFFF)));
            }
        }

        // Pass 2: emit.
        let mut bytes: Vec<u8> = Vec::new();
        let mut written: Vec<bool> = Vec::new();
        let mut instrs = Vec::new();
        let mut objects = BTreeMap::new();
        let mut indirect_targets = BTreeMap::new();
        let mut store_objects = BTreeMap::new();
        let mut emit = |addr: u16, data: &[u8], line: usize| -> Result<(), AsmError> {
            let off = (addr - base) as usize;
            if bytes.len() < off + data.len() {
                bytes.resize(off + data.len(), 0);
                written.resize(off + data.len(), false);
            }
            for (i, b) in data.iter().enumerate() {
                if written[off + i] {
                    return Err(AsmError::new(line, AsmErrorKind::Overlap(addr + i as u16)));
                }
                written[off + i] = true;
                bytes[off + i] = *b;
            }
            Ok(())
        };
        for (i, stmt) in self.stmts.iter().enumerate() {
            let addr = addrs[i];
            match &stmt.kind {
                StmtKind::Insn(sym) => {
                    let insn = sym.clone().try_map(|v| v.resolve(&symbols, stmt.line))?;
                    emit(addr, &insn.encode(), stmt.line)?;
                    if !stmt.targets.is_empty() {
                        let t = stmt
                            .targets
                            .iter()
                            .map(|v| v.resolve(&symbols, stmt.line))
                            .collect::<Result<Vec<_>, _>>()?;
                        indirect_targets.insert(addr, t);
                    }
                    if let Some(w) = &stmt.writes {
                        store_objects.insert(addr, w.clone());
                    }
                    instrs.push((addr, insn, i));
                }
                StmtKind::Word(v) => emit(addr, &v.resolve(&symbols, stmt.line)?.to_le_bytes(), stmt.line)?,
                StmtKind::Byte(b) => emit(addr, &[*b], stmt.line)?,
                StmtKind::Object { name, addr: a, len } => {
                    let obj = DataObject {
                        addr: a.resolve(&symbols, stmt.line)?,
                        len: len.resolve(&symbols, stmt.line)?,
                    };
                    objects.insert(name.clone(), obj);
                }
                StmtKind::Org(_) | StmtKind::Equ(..) => {}
            }
        }
        for stmt in &self.stmts {
            if let Some(w) = &stmt.writes {
                if !objects.contains_key(w) {
                    return Err(AsmError::new(stmt.line, AsmErrorKind::UnknownObject(w.clone())));
                }
            }
        }
        instrs.sort_by_key(|(a, _, _)| *a);
        Ok(Assembled { base, bytes, addrs, symbols, objects, indirect_targets, store_objects, instrs })
    }

    /// Renders back to assembly text that parses to an equivalent program.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for stmt in &self.stmts {
            for label in &stmt.labels {
                out.push_str(label);
                out.push_str(":\n");
            }
            if !stmt.targets.is_empty() {
                let list: Vec<String> = stmt.targets.iter().map(|t| t.to_string()).collect();
                out.push_str(&format!("    .targets {}\n", list.join(", ")));
            }
            if let Some(w) = &stmt.writes {
                out.push_str(&format!("    .writes {w}\n"));
            }
            let body = match &stmt.kind {
                StmtKind::Insn(i) => i.to_string(),
                StmtKind::Word(v) => format!(".word {v}"),
                StmtKind::Byte(b) => format!(".byte {b:#04x}"),
                StmtKind::Org(v) => format!(".org {v}"),
                StmtKind::Equ(name, _) if name.is_empty() => continue,
                StmtKind::Equ(name, v) => format!(".equ {name}, {v}"),
                StmtKind::Object { name, addr, len } => format!(".object {name}, {addr}, {len}"),
            };
            out.push_str("    ");
            out.push_str(&body);
            out.push('\n');
        }
        out
    }

    /// Linear-sweep disassembly of an image loaded at `base`. Words that do
    /// not decode become `.word`, a trailing odd byte becomes `.byte`.
    pub fn disassemble(bytes: &[u8], base: Address) -> AsmProgram {
        let mut stmts = vec![Stmt {
            labels: Vec::new(),
            kind: StmtKind::Org(Value::Num(base)),
            line: 0,
            tag: Tag::Source,
            targets: Vec::new(),
            writes: None,
        }];
        let mut at = 0usize;
        while at < bytes.len() {
            let kind = if at + 1 == bytes.len() {
                at += 1;
                StmtKind::Byte(bytes[at - 1])
            } else {
                match Instruction::decode(&bytes[at..]) {
                    Ok(insn) => {
                        at += insn.size() as usize;
                        StmtKind::Insn(insn.try_map::<Value, ()>(|v| Ok(Value::Num(v))).unwrap())
                    }
                    Err(_) => {
                        at += 2;
                        StmtKind::Word(Value::Num(u16::from_le_bytes([bytes[at - 2], bytes[at - 1]])))
                    }
                }
            };
            stmts.push(Stmt {
                labels: Vec::new(),
                kind,
                line: 0,
                tag: Tag::Source,
                targets: Vec::new(),
                writes: None,
            });
        }
        AsmProgram { stmts }
    }
}

fn label_prefix(s: &str) -> Option<usize> {
    let colon = s.find(':')?;
    let name = s[..colon].trim();
    (!name.is_empty() && !name.starts_with('.') && !name.contains(char::is_whitespace)).then_some(colon)
}

fn check_ident(name: &str, line: usize) -> Result<(), AsmError> {
    let mut chars = name.chars();
    let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && parse_reg(name).is_none();
    if ok {
        Ok(())
    } else {
        Err(AsmError::syntax(line, format!("bad identifier `{name}`")))
    }
}

fn split_args(args: &str) -> Vec<&str> {
    if args.trim().is_empty() {
        return Vec::new();
    }
    args.split(',').map(str::trim).collect()
}

fn parse_number(s: &str) -> Option<u16> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        u32::from_str_radix(h, 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b") {
        u32::from_str_radix(b, 2).ok()?
    } else if body.chars().all(|c| c.is_ascii_digit()) && !body.is_empty() {
        body.parse::<u32>().ok()?
    } else {
        return None;
    };
    if neg {
        (v <= 0x8000).then(|| (v as u16).wrapping_neg())
    } else {
        (v <= 0xFFFF).then_some(v as u16)
    }
}

fn parse_value(s: &str, line: usize) -> Result<Value, AsmError> {
    let s = s.trim();
    if let Some(n) = parse_number(s) {
        return Ok(Value::Num(n));
    }
    let Some(first) = s.chars().next() else {
        return Err(AsmError::syntax(line, "missing operand"));
    };
    let skip = first.len_utf8();
    let split = s[skip..].find(['+', '-']).map(|i| i + skip);
    let (name, offset) = match split {
        Some(i) => {
            let off = parse_number(s[i + 1..].trim())
                .ok_or_else(|| AsmError::syntax(line, format!("bad offset in `{s}`")))? as i32;
            (s[..i].trim(), if &s[i..i + 1] == "-" { -off } else { off })
        }
        None => (s, 0),
    };
    check_ident(name, line)?;
    Ok(Value::Sym { name: name.to_string(), offset })
}

fn parse_reg(s: &str) -> Option<Reg> {
    let s = s.trim().to_ascii_uppercase();
    match s.as_str() {
        "PC" => Some(Reg::PC),
        "SP" => Some(Reg::SP),
        _ => {
            let idx = s.strip_prefix('R')?;
            if idx.len() != 1 {
                return None;
            }
            Reg::new(idx.parse().ok()?)
        }
    }
}

fn expect_reg(s: &str, line: usize) -> Result<Reg, AsmError> {
    parse_reg(s).ok_or_else(|| AsmError::syntax(line, format!("expected register, got `{s}`")))
}

fn expect_dest(s: &str, line: usize) -> Result<Reg, AsmError> {
    let r = expect_reg(s, line)?;
    if r == Reg::PC {
        return Err(AsmError::syntax(line, "PC cannot be a data destination"));
    }
    Ok(r)
}

fn expect_imm(s: &str, line: usize) -> Result<Value, AsmError> {
    let body = s
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| AsmError::syntax(line, format!("expected #immediate, got `{s}`")))?;
    parse_value(body, line)
}

enum MemOperand {
    Based(Reg, Value),
    Absolute(Value),
}

fn expect_mem(s: &str, line: usize) -> Result<MemOperand, AsmError> {
    let inner = s
        .trim()
        .strip_prefix('[')
        .and_then(|x| x.strip_suffix(']'))
        .ok_or_else(|| AsmError::syntax(line, format!("expected [..], got `{s}`")))?
        .trim();
    if let Some(r) = parse_reg(inner) {
        return Ok(MemOperand::Based(r, Value::Num(0)));
    }
    if let Some(i) = inner.find(['+', '-']) {
        if let Some(r) = parse_reg(&inner[..i]) {
            let off = parse_value(inner[i + 1..].trim(), line)?;
            let off = if &inner[i..i + 1] == "-" {
                match off {
                    Value::Num(n) => Value::Num(n.wrapping_neg()),
                    Value::Sym { .. } => return Err(AsmError::syntax(line, "negative symbolic offset")),
                }
            } else {
                off
            };
            return Ok(MemOperand::Based(r, off));
        }
    }
    Ok(MemOperand::Absolute(parse_value(inner, line)?))
}

fn parse_insn(mnemonic: &str, args: &str, line: usize) -> Result<SymInsn, AsmError> {
    let a = split_args(args);
    let arity = |n: usize| -> Result<(), AsmError> {
        if a.len() == n {
            Ok(())
        } else {
            Err(AsmError::syntax(line, format!("`{mnemonic}` takes {n} operand(s)")))
        }
    };
    let insn = match mnemonic {
        "nop" => {
            arity(0)?;
            Insn::Nop
        }
        "halt" => {
            arity(0)?;
            Insn::Halt
        }
        "ret" => {
            arity(0)?;
            Insn::Ret
        }
        "movi" => {
            arity(2)?;
            Insn::Movi { rd: expect_dest(a[0], line)?, imm: expect_imm(a[1], line)? }
        }
        "mov" => {
            arity(2)?;
            Insn::Mov { rd: expect_dest(a[0], line)?, rs: expect_reg(a[1], line)? }
        }
        "ld" | "ldi" => {
            arity(2)?;
            let rd = expect_dest(a[0], line)?;
            match expect_mem(a[1], line)? {
                MemOperand::Based(base, off) if mnemonic == "ld" => Insn::Ld { rd, base, off },
                MemOperand::Absolute(addr) if mnemonic == "ldi" => Insn::Ldi { rd, addr },
                _ => return Err(AsmError::syntax(line, "LD takes [Rn+off], LDI takes [addr]")),
            }
        }
        "st" | "sti" => {
            arity(2)?;
            let rs = expect_reg(a[1], line)?;
            match expect_mem(a[0], line)? {
                MemOperand::Based(base, off) if mnemonic == "st" => Insn::St { base, off, rs },
                MemOperand::Absolute(addr) if mnemonic == "sti" => Insn::Sti { addr, rs },
                _ => return Err(AsmError::syntax(line, "ST takes [Rn+off], STI takes [addr]")),
            }
        }
        "add" | "sub" | "and" | "xor" => {
            arity(2)?;
            let op = match mnemonic {
                "add" => AluOp::Add,
                "sub" => AluOp::Sub,
                "and" => AluOp::And,
                _ => AluOp::Xor,
            };
            Insn::Alu { op, rd: expect_dest(a[0], line)?, rs: expect_reg(a[1], line)? }
        }
        "cmp" => {
            arity(2)?;
            Insn::Cmp { ra: expect_reg(a[0], line)?, rb: expect_reg(a[1], line)? }
        }
        "jmp" | "call" | "jz" | "jnz" | "jc" => {
            arity(1)?;
            let target = parse_value(a[0], line)?;
            match mnemonic {
                "jmp" => Insn::Jmp { target },
                "call" => Insn::Call { target },
                "jz" => Insn::Jcc { cond: Cond::Zero, target },
                "jnz" => Insn::Jcc { cond: Cond::NotZero, target },
                _ => Insn::Jcc { cond: Cond::Carry, target },
            }
        }
        "jmpr" => {
            arity(1)?;
            Insn::Jmpr { rs: expect_reg(a[0], line)? }
        }
        "push" => {
            arity(1)?;
            Insn::Push { rs: expect_reg(a[0], line)? }
        }
        "pop" => {
            arity(1)?;
            Insn::Pop { rd: expect_dest(a[0], line)? }
        }
        "in" => {
            arity(2)?;
            Insn::In { rd: expect_dest(a[0], line)?, port: parse_value(a[1], line)? }
        }
        "out" => {
            arity(2)?;
            Insn::Out { port: parse_value(a[0], line)?, rs: expect_reg(a[1], line)? }
        }
        _ => return Err(AsmError::new(line, AsmErrorKind::UnknownMnemonic(mnemonic.to_string()))),
    };
    Ok(insn)
}
