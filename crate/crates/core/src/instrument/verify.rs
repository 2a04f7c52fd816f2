// Licensed under the Apache-2.0 license

//! Verifier side of CFA and DFA: CF-Log path checking over the original
//! program and full replay of the instrumented image.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::asm::Tag;
use crate::isa::{Address, Insn, Instruction, Word};
use crate::mcu::McuState;
use crate::memory::page;
use crate::monitor::MonitorBank;
use crate::protocol::{Reason, Verdict};

use super::{er_bounds, Instrumented, LogLayout};

/// Upper bound on DFS states explored by [`verify_cfa`].
const MAX_CFA_STATES: usize = 1 << 20;
/// Upper bound on replay steps in [`verify_dfa`].
const MAX_REPLAY_STEPS: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ILogEntry {
    pub addr: Address,
    pub value: Word,
}

/// OR contents split into the program output and the two logs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrLogs {
    pub output: Vec<u8>,
    pub cf_log: Vec<Address>,
    pub i_log: Vec<ILogEntry>,
}

fn word(bytes: &[u8], off: usize) -> Word {
    u16::from_le_bytes([bytes[off], bytes[off + 1]])
}

impl OrLogs {
    /// Parses OR bytes; `None` if the cursors are out of range.
    pub fn parse(or_bytes: &[u8], layout: &LogLayout) -> Option<OrLogs> {
        if or_bytes.len() != layout.or().len as usize {
            return None;
        }
        let off = |a: Address| (a - layout.or_min) as usize;
        let cf_cur = word(or_bytes, off(layout.cf_cursor()));
        let i_cur = word(or_bytes, off(layout.i_cursor()));
        if cf_cur < layout.cf_base() || cf_cur > layout.cf_end() || (cf_cur - layout.cf_base()) % 2 != 0 {
            return None;
        }
        if i_cur < layout.i_base() || i_cur > layout.i_end() || (i_cur - layout.i_base()) % 4 != 0 {
            return None;
        }
        let cf_log = (layout.cf_base()..cf_cur).step_by(2).map(|a| word(or_bytes, off(a))).collect();
        let i_log = (layout.i_base()..i_cur)
            .step_by(4)
            .map(|a| ILogEntry { addr: word(or_bytes, off(a)), value: word(or_bytes, off(a) + 2) })
            .collect();
        Some(OrLogs { output: or_bytes[..layout.output_len as usize].to_vec(), cf_log, i_log })
    }
}

/// Checks that `cf_log` is a path through the original program from
/// `er_start` to `er_exit`, with calls and returns paired. Log entries are
/// instrumented addresses.
pub fn verify_cfa(ins: &Instrumented, cf_log: &[Address]) -> Verdict {
    let orig = &ins.original;
    let Ok(er) = er_bounds(orig) else {
        return Verdict::reject(Reason::PathInvalid);
    };
    let instrs = &orig.instrs;
    let pos_of = |a: Address| instrs.binary_search_by_key(&a, |(x, _, _)| *x).ok();
    let (Some(start), Some(exit)) = (pos_of(er.er_min), pos_of(er.exit_pc())) else {
        return Verdict::reject(Reason::PathInvalid);
    };
    let mapped = |pos: usize| ins.group_start.get(&instrs[pos].2).copied();
    let in_er = |pos: usize| pos >= start && pos <= exit;

    let mut seen: HashSet<(usize, usize, Vec<usize>)> = HashSet::new();
    let mut work = vec![(start, 0usize, Vec::<usize>::new())];
    while let Some(state) = work.pop() {
        if seen.len() > MAX_CFA_STATES {
            break;
        }
        if !seen.insert(state.clone()) {
            continue;
        }
        let (pos, k, stack) = state;
        if pos == exit {
            if k == cf_log.len() {
                return Verdict::OK;
            }
            continue;
        }
        let next_logged = cf_log.get(k).copied();
        let (addr, insn, _) = instrs[pos];
        let goto = |t: Address| pos_of(t).filter(|&p| in_er(p) && mapped(p) == next_logged);
        match insn {
            Insn::Jmp { target } => {
                if let Some(p) = goto(target) {
                    work.push((p, k + 1, stack));
                }
            }
            Insn::Jcc { target, .. } => {
                if pos + 1 <= exit {
                    work.push((pos + 1, k, stack.clone()));
                }
                if let Some(p) = goto(target) {
                    work.push((p, k + 1, stack));
                }
            }
            Insn::Call { target } => {
                if let Some(p) = goto(target) {
                    let mut s = stack;
                    s.push(pos + 1);
                    work.push((p, k + 1, s));
                }
            }
            Insn::Ret => {
                if let Some(&r) = stack.last() {
                    if mapped(r) == next_logged {
                        let mut s = stack;
                        s.pop();
                        work.push((r, k + 1, s));
                    }
                }
            }
            Insn::Jmpr { .. } => {
                let targets = orig.indirect_targets.get(&addr).cloned().unwrap_or_default();
                for t in targets {
                    if let Some(p) = goto(t) {
                        work.push((p, k + 1, stack.clone()));
                    }
                }
            }
            Insn::Halt => {}
            _ => {
                if pos + 1 <= exit && instrs[pos + 1].0 as u32 == addr as u32 + insn.size() as u32 {
                    work.push((pos + 1, k, stack));
                }
            }
        }
    }
    Verdict::reject(Reason::PathInvalid)
}

/// Replays the instrumented image, feeding each logged read from the
/// I-Log, and accepts iff the replay reproduces the reported CF-Log and
/// output. Stores annotated with `.writes OBJ` must also stay inside OBJ.
pub fn verify_dfa(ins: &Instrumented, or_bytes: &[u8]) -> Verdict {
    let layout = ins.target.layout;
    let Some(reported) = OrLogs::parse(or_bytes, &layout) else {
        return Verdict::reject(Reason::DataReplayMismatch);
    };
    match replay(ins, &reported.i_log) {
        Some(replayed) if replayed.output == reported.output && replayed.cf_log == reported.cf_log => Verdict::OK,
        _ => Verdict::reject(Reason::DataReplayMismatch),
    }
}

/// Instrumented addresses of original loads, with their destination register.
fn load_sites(ins: &Instrumented) -> BTreeMap<Address, (Instruction, bool)> {
    let mut out = BTreeMap::new();
    for (i, stmt) in ins.program.stmts.iter().enumerate() {
        if let (Tag::Original(_), Some(insn)) = (stmt.tag, stmt.as_insn()) {
            let is_in = matches!(insn, Insn::In { .. });
            if matches!(insn, Insn::Ld { .. } | Insn::Ldi { .. } | Insn::In { .. }) {
                let addr = ins.assembled.addrs[i];
                let resolved = ins.assembled.instrs.iter().find(|(a, _, _)| *a == addr).map(|x| x.1);
                if let Some(r) = resolved {
                    out.insert(addr, (r, is_in));
                }
            }
        }
    }
    out
}

/// Runs the instrumented image on a fresh verifier-local device. Returns
/// the replay's OR logs, or `None` on any divergence.
pub fn replay(ins: &Instrumented, i_log: &[ILogEntry]) -> Option<OrLogs> {
    let layout = ins.target.layout;
    let meta = ins.metadata();
    let mut st = McuState::load_program(&ins.assembled.bytes, ins.target.map).ok()?;
    let mut bank = MonitorBank::none(&st.map);
    for (i, w) in meta.to_words().into_iter().enumerate() {
        st.poke_word(page::METADATA.start + 2 * i as u16, w);
    }
    st.set_pc(meta.er_min);
    let er_sites: BTreeSet<Address> =
        load_sites(ins).into_keys().filter(|a| meta.er().contains(*a)).collect();
    let sites = load_sites(ins);
    let er_done = meta.er_max.wrapping_add(1);
    let mut k = 0;

    for _ in 0..MAX_REPLAY_STEPS {
        let pc = st.pc();
        if pc == er_done {
            break;
        }
        if let Some(obj) = ins.assembled.store_objects.get(&pc) {
            let o = ins.assembled.objects.get(obj)?;
            let ea = match Instruction::decode(&st.mem[pc as usize..]).ok()? {
                Insn::St { base, off, .. } => st.regs[base.index()].wrapping_add(off),
                Insn::Sti { addr, .. } => addr,
                _ => return None,
            };
            let (lo, hi) = (o.addr as u32, o.addr as u32 + o.len as u32);
            if (ea as u32) < lo || ea as u32 + 2 > hi {
                return None;
            }
        }
        let logged = if er_sites.contains(&pc) {
            let (insn, is_in) = sites[&pc];
            (is_in || st.regs[6] == 1).then_some(insn)
        } else {
            None
        };
        let out = st.step(&mut bank).ok()?;
        if out.fault.is_some() || out.reset {
            return None;
        }
        if let Some(insn) = logged {
            let entry = i_log.get(k)?;
            let (rd, expect_addr) = match insn {
                Insn::In { rd, port } => (rd, port),
                Insn::Ld { rd, .. } | Insn::Ldi { rd, .. } => (rd, st.read_word(layout.i_scratch())),
                _ => unreachable!(),
            };
            if entry.addr != expect_addr {
                return None;
            }
            st.regs[rd.index()] = entry.value;
            k += 1;
        }
        if st.halted {
            break;
        }
    }
    if st.pc() != er_done || k != i_log.len() {
        return None;
    }
    OrLogs::parse(st.bytes(layout.or()), &layout)
}

/// Control-transfer destinations of the original program, mapped into the
/// instrumented address space. The oracle for CF-Log completeness.
pub fn expected_cf_log(ins: &Instrumented, transfers: &[(Address, Address)]) -> Option<Vec<Address>> {
    let er = er_bounds(&ins.original).ok()?;
    let idx: HashMap<Address, Address> = ins
        .original
        .instrs
        .iter()
        .filter_map(|(a, _, s)| ins.group_start.get(s).map(|g| (*a, *g)))
        .collect();
    transfers
        .iter()
        .filter(|(from, _)| er.er().contains(*from))
        .map(|(_, to)| idx.get(to).copied())
        .collect()
}
