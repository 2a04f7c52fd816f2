// Licensed under the Apache-2.0 license

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asm::{AsmError, AsmProgram, Assembled};
use crate::isa::{Address, Insn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminator {
    Fallthrough,
    Jump,
    Branch,
    Call,
    Return,
    Indirect,
    Halt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Fallthrough,
    Direct,
    Conditional,
    Call,
    Return,
    Indirect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub start: Address,
    /// One past the last byte of the last instruction.
    pub end: u32,
    pub terminator: Terminator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cfg {
    pub blocks: Vec<Block>,
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error("transfer at {from:#06x} targets {to:#06x}, which is not an instruction")]
    UnresolvedTarget { from: Address, to: Address },
    #[error("JMPR at {0:#06x} has no .targets annotation")]
    MissingTargets(Address),
}

impl Cfg {
    pub fn block_at(&self, addr: Address) -> Option<usize> {
        self.blocks.iter().position(|b| b.start == addr)
    }

    pub fn successors(&self, block: usize) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == block)
    }
}

/// Splits the program into basic blocks at labels and after every control
/// transfer, then connects them.
pub fn build_cfg(prog: &AsmProgram, base: Address) -> Result<Cfg, CfgError> {
    let asm = prog.assemble(base)?;
    build_cfg_assembled(prog, &asm)
}

pub fn build_cfg_assembled(prog: &AsmProgram, asm: &Assembled) -> Result<Cfg, CfgError> {
    let instrs = &asm.instrs;
    if instrs.is_empty() {
        return Ok(Cfg { blocks: Vec::new(), edges: Vec::new() });
    }
    let is_insn = |a: Address| instrs.binary_search_by_key(&a, |(x, _, _)| *x).is_ok();
    let mut leaders = BTreeSet::new();
    leaders.insert(instrs[0].0);
    for (i, stmt) in prog.stmts.iter().enumerate() {
        if !stmt.labels.is_empty() && is_insn(asm.addrs[i]) {
            leaders.insert(asm.addrs[i]);
        }
    }
    for (k, (addr, insn, _)) in instrs.iter().enumerate() {
        let direct = match insn {
            Insn::Jmp { target } | Insn::Jcc { target, .. } | Insn::Call { target } => Some(*target),
            _ => None,
        };
        if let Some(t) = direct {
            if !is_insn(t) {
                return Err(CfgError::UnresolvedTarget { from: *addr, to: t });
            }
            leaders.insert(t);
        }
        if let Insn::Jmpr { .. } = insn {
            let targets = asm.indirect_targets.get(addr).ok_or(CfgError::MissingTargets(*addr))?;
            for &t in targets {
                if !is_insn(t) {
                    return Err(CfgError::UnresolvedTarget { from: *addr, to: t });
                }
                leaders.insert(t);
            }
        }
        if (insn.is_control_transfer() || matches!(insn, Insn::Halt)) && k + 1 < instrs.len() {
            leaders.insert(instrs[k + 1].0);
        }
    }

    let mut blocks: Vec<Block> = Vec::new();
    let mut last_insn = Vec::new();
    for (k, (addr, insn, _)) in instrs.iter().enumerate() {
        let end = *addr as u32 + insn.size() as u32;
        // A gap (data, .org) also ends a block.
        let contiguous = blocks.last().is_some_and(|b| b.end == *addr as u32);
        if leaders.contains(addr) || !contiguous {
            blocks.push(Block { start: *addr, end, terminator: Terminator::Fallthrough });
            last_insn.push(k);
        } else {
            let b = blocks.last_mut().unwrap();
            b.end = end;
            *last_insn.last_mut().unwrap() = k;
        }
    }

    let block_of = |a: Address| blocks.iter().position(|b| b.start == a);
    let mut edges = BTreeSet::new();
    let mut calls = Vec::new();
    let mut terms = Vec::with_capacity(blocks.len());
    for (b, &k) in last_insn.iter().enumerate() {
        let (addr, insn, _) = &instrs[k];
        let next = (b + 1 < blocks.len() && blocks[b + 1].start as u32 == blocks[b].end).then_some(b + 1);
        let term = match insn {
            Insn::Jmp { target } => {
                edges.insert(Edge { from: b, to: block_of(*target).unwrap(), kind: EdgeKind::Direct });
                Terminator::Jump
            }
            Insn::Jcc { target, .. } => {
                edges.insert(Edge { from: b, to: block_of(*target).unwrap(), kind: EdgeKind::Conditional });
                if let Some(n) = next {
                    edges.insert(Edge { from: b, to: n, kind: EdgeKind::Fallthrough });
                }
                Terminator::Branch
            }
            Insn::Call { target } => {
                let f = block_of(*target).unwrap();
                edges.insert(Edge { from: b, to: f, kind: EdgeKind::Call });
                calls.push((b, f, next));
                Terminator::Call
            }
            Insn::Ret => Terminator::Return,
            Insn::Jmpr { .. } => {
                for t in &asm.indirect_targets[addr] {
                    edges.insert(Edge { from: b, to: block_of(*t).unwrap(), kind: EdgeKind::Indirect });
                }
                Terminator::Indirect
            }
            Insn::Halt => Terminator::Halt,
            _ => {
                if let Some(n) = next {
                    edges.insert(Edge { from: b, to: n, kind: EdgeKind::Fallthrough });
                }
                Terminator::Fallthrough
            }
        };
        terms.push(term);
    }
    for (b, t) in blocks.iter_mut().zip(terms) {
        b.terminator = t;
    }

    // Return edges: every RET reachable inside the callee goes back to the
    // block after the call site.
    let snapshot: Vec<Edge> = edges.iter().copied().collect();
    for &(_, callee, ret_to) in &calls {
        let Some(ret_to) = ret_to else { continue };
        let mut seen = HashSet::new();
        let mut work = vec![callee];
        while let Some(b) = work.pop() {
            if !seen.insert(b) {
                continue;
            }
            match blocks[b].terminator {
                Terminator::Return => {
                    edges.insert(Edge { from: b, to: ret_to, kind: EdgeKind::Return });
                }
                Terminator::Call => {
                    if let Some(&(_, _, Some(n))) = calls.iter().find(|c| c.0 == b) {
                        work.push(n);
                    }
                }
                _ => work.extend(snapshot.iter().filter(|e| e.from == b).map(|e| e.to)),
            }
        }
    }
    Ok(Cfg { blocks, edges: edges.into_iter().collect() })
}
