// Licensed under the Apache-2.0 license

//! Toy 16-bit instruction set.
//!
//! Every instruction is one or two little-endian 16-bit words. The first word
//! carries the opcode in bits 15..10, register `a` in bits 9..7, register `b`
//! in bits 6..4; bits 3..0 are always zero. Two-word instructions carry an
//! immediate, address, offset or port in the second word.
//!
//! R0 is the program counter and R1 the stack pointer. Data instructions may
//! read either, but only control-flow instructions write R0; a data
//! instruction naming R0 as its destination does not decode.

use std::fmt;

use thiserror::Error;

pub type Address = u16;
pub type Word = u16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const PC: Reg = Reg(0);
    pub const SP: Reg = Reg(1);

    pub fn new(index: u8) -> Option<Reg> {
        (index < 8).then_some(Reg(index))
    }

    /// Panics at compile time for indices above 7.
    pub const fn new_const(index: u8) -> Reg {
        assert!(index < 8);
        Reg(index)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Xor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cond {
    Zero,
    NotZero,
    Carry,
}

/// An instruction whose immediate-like operands have type `A`.
///
/// `Insn<u16>` is a machine instruction; the assembler uses `Insn<Value>` with
/// symbolic operands and resolves them in a second pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Insn<A> {
    Nop,
    Halt,
    Movi { rd: Reg, imm: A },
    Mov { rd: Reg, rs: Reg },
    Ld { rd: Reg, base: Reg, off: A },
    St { base: Reg, off: A, rs: Reg },
    Ldi { rd: Reg, addr: A },
    Sti { addr: A, rs: Reg },
    Alu { op: AluOp, rd: Reg, rs: Reg },
    Cmp { ra: Reg, rb: Reg },
    Jmp { target: A },
    Jcc { cond: Cond, target: A },
    Jmpr { rs: Reg },
    Call { target: A },
    Ret,
    Push { rs: Reg },
    Pop { rd: Reg },
    In { rd: Reg, port: A },
    Out { port: A, rs: Reg },
}

pub type Instruction = Insn<Word>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("reserved bits set in {0:#06x}")]
    ReservedBits(u16),
    #[error("R0 is not a valid destination in {0:#06x}")]
    PcDestination(u16),
    #[error("instruction truncated")]
    Truncated,
}

mod op {
    pub const NOP: u8 = 0x00;
    pub const HALT: u8 = 0x01;
    pub const MOVI: u8 = 0x02;
    pub const MOV: u8 = 0x03;
    pub const LD: u8 = 0x04;
    pub const ST: u8 = 0x05;
    pub const LDI: u8 = 0x06;
    pub const STI: u8 = 0x07;
    pub const ADD: u8 = 0x08;
    pub const SUB: u8 = 0x09;
    pub const AND: u8 = 0x0A;
    pub const XOR: u8 = 0x0B;
    pub const CMP: u8 = 0x0C;
    pub const JMP: u8 = 0x0D;
    pub const JZ: u8 = 0x0E;
    pub const JNZ: u8 = 0x0F;
    pub const JC: u8 = 0x10;
    pub const JMPR: u8 = 0x11;
    pub const CALL: u8 = 0x12;
    pub const RET: u8 = 0x13;
    pub const PUSH: u8 = 0x14;
    pub const POP: u8 = 0x15;
    pub const IN: u8 = 0x16;
    pub const OUT: u8 = 0x17;
}

impl<A> Insn<A> {
    /// Encoded size in bytes. Independent of operand values.
    pub fn size(&self) -> u16 {
        match self {
            Insn::Movi { .. }
            | Insn::Ld { .. }
            | Insn::St { .. }
            | Insn::Ldi { .. }
            | Insn::Sti { .. }
            | Insn::Jmp { .. }
            | Insn::Jcc { .. }
            | Insn::Call { .. }
            | Insn::In { .. }
            | Insn::Out { .. } => 4,
            _ => 2,
        }
    }

    /// Fixed cycle cost, including the taken/not-taken cases of branches.
    pub fn cycles(&self) -> u64 {
        match self {
            Insn::Nop | Insn::Halt | Insn::Mov { .. } | Insn::Alu { .. } | Insn::Cmp { .. } => 1,
            Insn::Movi { .. }
            | Insn::Jmp { .. }
            | Insn::Jcc { .. }
            | Insn::Jmpr { .. }
            | Insn::Push { .. }
            | Insn::Pop { .. } => 2,
            Insn::Ld { .. }
            | Insn::St { .. }
            | Insn::Ldi { .. }
            | Insn::Sti { .. }
            | Insn::In { .. }
            | Insn::Out { .. } => 3,
            Insn::Call { .. } | Insn::Ret => 4,
        }
    }

    /// True for instructions that may change the PC other than by falling through.
    pub fn is_control_transfer(&self) -> bool {
        matches!(
            self,
            Insn::Jmp { .. }
                | Insn::Jcc { .. }
                | Insn::Jmpr { .. }
                | Insn::Call { .. }
                | Insn::Ret
        )
    }

    pub fn try_map<B, E>(self, mut f: impl FnMut(A) -> Result<B, E>) -> Result<Insn<B>, E> {
        Ok(match self {
            Insn::Nop => Insn::Nop,
            Insn::Halt => Insn::Halt,
            Insn::Movi { rd, imm } => Insn::Movi { rd, imm: f(imm)? },
            Insn::Mov { rd, rs } => Insn::Mov { rd, rs },
            Insn::Ld { rd, base, off } => Insn::Ld { rd, base, off: f(off)? },
            Insn::St { base, off, rs } => Insn::St { base, off: f(off)?, rs },
            Insn::Ldi { rd, addr } => Insn::Ldi { rd, addr: f(addr)? },
            Insn::Sti { addr, rs } => Insn::Sti { addr: f(addr)?, rs },
            Insn::Alu { op, rd, rs } => Insn::Alu { op, rd, rs },
            Insn::Cmp { ra, rb } => Insn::Cmp { ra, rb },
            Insn::Jmp { target } => Insn::Jmp { target: f(target)? },
            Insn::Jcc { cond, target } => Insn::Jcc { cond, target: f(target)? },
            Insn::Jmpr { rs } => Insn::Jmpr { rs },
            Insn::Call { target } => Insn::Call { target: f(target)? },
            Insn::Ret => Insn::Ret,
            Insn::Push { rs } => Insn::Push { rs },
            Insn::Pop { rd } => Insn::Pop { rd },
            Insn::In { rd, port } => Insn::In { rd, port: f(port)? },
            Insn::Out { port, rs } => Insn::Out { port: f(port)?, rs },
        })
    }

    /// Registers this instruction writes (PC excluded).
    pub fn written_regs(&self) -> Vec<Reg> {
        match self {
            Insn::Movi { rd, .. }
            | Insn::Mov { rd, .. }
            | Insn::Ld { rd, .. }
            | Insn::Ldi { rd, .. }
            | Insn::Alu { rd, .. }
            | Insn::Pop { rd }
            | Insn::In { rd, .. } => vec![*rd],
            _ => Vec::new(),
        }
    }

    /// Every register operand, read or written.
    pub fn regs(&self) -> Vec<Reg> {
        match self {
            Insn::Movi { rd, .. } | Insn::Ldi { rd, .. } | Insn::Pop { rd } | Insn::In { rd, .. } => {
                vec![*rd]
            }
            Insn::Mov { rd, rs } | Insn::Alu { rd, rs, .. } => vec![*rd, *rs],
            Insn::Ld { rd, base, .. } => vec![*rd, *base],
            Insn::St { base, rs, .. } => vec![*base, *rs],
            Insn::Sti { rs, .. } | Insn::Jmpr { rs } | Insn::Push { rs } | Insn::Out { rs, .. } => {
                vec![*rs]
            }
            Insn::Cmp { ra, rb } => vec![*ra, *rb],
            _ => Vec::new(),
        }
    }
}

impl Instruction {
    pub fn encode(&self) -> Vec<u8> {
        let (opcode, a, b, ext) = match *self {
            Insn::Nop => (op::NOP, 0, 0, None),
            Insn::Halt => (op::HALT, 0, 0, None),
            Insn::Movi { rd, imm } => (op::MOVI, rd.0, 0, Some(imm)),
            Insn::Mov { rd, rs } => (op::MOV, rd.0, rs.0, None),
            Insn::Ld { rd, base, off } => (op::LD, rd.0, base.0, Some(off)),
            Insn::St { base, off, rs } => (op::ST, base.0, rs.0, Some(off)),
            Insn::Ldi { rd, addr } => (op::LDI, rd.0, 0, Some(addr)),
            Insn::Sti { addr, rs } => (op::STI, rs.0, 0, Some(addr)),
            Insn::Alu { op: alu, rd, rs } => {
                let code = match alu {
                    AluOp::Add => op::ADD,
                    AluOp::Sub => op::SUB,
                    AluOp::And => op::AND,
                    AluOp::Xor => op::XOR,
                };
                (code, rd.0, rs.0, None)
            }
            Insn::Cmp { ra, rb } => (op::CMP, ra.0, rb.0, None),
            Insn::Jmp { target } => (op::JMP, 0, 0, Some(target)),
            Insn::Jcc { cond, target } => {
                let code = match cond {
                    Cond::Zero => op::JZ,
                    Cond::NotZero => op::JNZ,
                    Cond::Carry => op::JC,
                };
                (code, 0, 0, Some(target))
            }
            Insn::Jmpr { rs } => (op::JMPR, rs.0, 0, None),
            Insn::Call { target } => (op::CALL, 0, 0, Some(target)),
            Insn::Ret => (op::RET, 0, 0, None),
            Insn::Push { rs } => (op::PUSH, rs.0, 0, None),
            Insn::Pop { rd } => (op::POP, rd.0, 0, None),
            Insn::In { rd, port } => (op::IN, rd.0, 0, Some(port)),
            Insn::Out { port, rs } => (op::OUT, rs.0, 0, Some(port)),
        };
        let head = ((opcode as u16) << 10) | ((a as u16) << 7) | ((b as u16) << 4);
        let mut out = head.to_le_bytes().to_vec();
        if let Some(ext) = ext {
            out.extend_from_slice(&ext.to_le_bytes());
        }
        out
    }

    /// Decodes one instruction from the start of `bytes`.
    pub fn decode(bytes: &[u8]) -> Result<Instruction, DecodeError> {
        let head = read_word(bytes, 0).ok_or(DecodeError::Truncated)?;
        if head & 0x000F != 0 {
            return Err(DecodeError::ReservedBits(head));
        }
        let opcode = (head >> 10) as u8;
        let a = Reg(((head >> 7) & 7) as u8);
        let b = Reg(((head >> 4) & 7) as u8);
        let ext = || read_word(bytes, 2).ok_or(DecodeError::Truncated);
        // Unused register fields must be zero so that encoding is canonical.
        let only_a = |insn: Instruction| {
            if b.0 != 0 {
                Err(DecodeError::ReservedBits(head))
            } else {
                Ok(insn)
            }
        };
        let none = |insn: Instruction| {
            if a.0 != 0 || b.0 != 0 {
                Err(DecodeError::ReservedBits(head))
            } else {
                Ok(insn)
            }
        };
        let dest = |r: Reg| {
            if r == Reg::PC {
                Err(DecodeError::PcDestination(head))
            } else {
                Ok(r)
            }
        };
        match opcode {
            op::NOP => none(Insn::Nop),
            op::HALT => none(Insn::Halt),
            op::MOVI => only_a(Insn::Movi { rd: dest(a)?, imm: ext()? }),
            op::MOV => Ok(Insn::Mov { rd: dest(a)?, rs: b }),
            op::LD => Ok(Insn::Ld { rd: dest(a)?, base: b, off: ext()? }),
            op::ST => Ok(Insn::St { base: a, off: ext()?, rs: b }),
            op::LDI => only_a(Insn::Ldi { rd: dest(a)?, addr: ext()? }),
            op::STI => only_a(Insn::Sti { addr: ext()?, rs: a }),
            op::ADD | op::SUB | op::AND | op::XOR => {
                let alu = match opcode {
                    op::ADD => AluOp::Add,
                    op::SUB => AluOp::Sub,
                    op::AND => AluOp::And,
                    _ => AluOp::Xor,
                };
                Ok(Insn::Alu { op: alu, rd: dest(a)?, rs: b })
            }
            op::CMP => Ok(Insn::Cmp { ra: a, rb: b }),
            op::JMP => none(Insn::Jmp { target: ext()? }),
            op::JZ => none(Insn::Jcc { cond: Cond::Zero, target: ext()? }),
            op::JNZ => none(Insn::Jcc { cond: Cond::NotZero, target: ext()? }),
            op::JC => none(Insn::Jcc { cond: Cond::Carry, target: ext()? }),
            op::JMPR => only_a(Insn::Jmpr { rs: a }),
            op::CALL => none(Insn::Call { target: ext()? }),
            op::RET => none(Insn::Ret),
            op::PUSH => only_a(Insn::Push { rs: a }),
            op::POP => only_a(Insn::Pop { rd: dest(a)? }),
            op::IN => only_a(Insn::In { rd: dest(a)?, port: ext()? }),
            op::OUT => only_a(Insn::Out { port: ext()?, rs: a }),
            other => Err(DecodeError::UnknownOpcode(other)),
        }
    }
}

fn read_word(bytes: &[u8], at: usize) -> Option<u16> {
    let lo = *bytes.get(at)?;
    let hi = *bytes.get(at + 1)?;
    Some(u16::from_le_bytes([lo, hi]))
}

impl<A: fmt::Display> fmt::Display for Insn<A> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Insn::Nop => write!(f, "NOP"),
            Insn::Halt => write!(f, "HALT"),
            Insn::Movi { rd, imm } => write!(f, "MOVI {rd}, #{imm}"),
            Insn::Mov { rd, rs } => write!(f, "MOV {rd}, {rs}"),
            Insn::Ld { rd, base, off } => write!(f, "LD {rd}, [{base}+{off}]"),
            Insn::St { base, off, rs } => write!(f, "ST [{base}+{off}], {rs}"),
            Insn::Ldi { rd, addr } => write!(f, "LDI {rd}, [{addr}]"),
            Insn::Sti { addr, rs } => write!(f, "STI [{addr}], {rs}"),
            Insn::Alu { op, rd, rs } => {
                let name = match op {
                    AluOp::Add => "ADD",
                    AluOp::Sub => "SUB",
                    AluOp::And => "AND",
                    AluOp::Xor => "XOR",
                };
                write!(f, "{name} {rd}, {rs}")
            }
            Insn::Cmp { ra, rb } => write!(f, "CMP {ra}, {rb}"),
            Insn::Jmp { target } => write!(f, "JMP {target}"),
            Insn::Jcc { cond, target } => {
                let name = match cond {
                    Cond::Zero => "JZ",
                    Cond::NotZero => "JNZ",
                    Cond::Carry => "JC",
                };
                write!(f, "{name} {target}")
            }
            Insn::Jmpr { rs } => write!(f, "JMPR {rs}"),
            Insn::Call { target } => write!(f, "CALL {target}"),
            Insn::Ret => write!(f, "RET"),
            Insn::Push { rs } => write!(f, "PUSH {rs}"),
            Insn::Pop { rd } => write!(f, "POP {rd}"),
            Insn::In { rd, port } => write!(f, "IN {rd}, {port}"),
            Insn::Out { port, rs } => write!(f, "OUT {port}, {rs}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(i: u8) -> Reg {
        Reg::new(i).unwrap()
    }

    #[test]
    fn movi_halt_encoding() {
        let movi = Insn::Movi { rd: r(2), imm: 7 };
        assert_eq!(movi.encode(), vec![0x00, 0x09, 0x07, 0x00]);
        assert_eq!(Insn::<u16>::Halt.encode(), vec![0x00, 0x04]);
        assert_eq!(Instruction::decode(&movi.encode()).unwrap(), movi);
    }

    #[test]
    fn rejects_pc_destination() {
        let bytes = Insn::Mov { rd: r(2), rs: r(3) }.encode();
        let mut word = u16::from_le_bytes([bytes[0], bytes[1]]);
        word &= !(7 << 7);
        assert!(matches!(
            Instruction::decode(&word.to_le_bytes()),
            Err(DecodeError::PcDestination(_))
        ));
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!(Instruction::decode(&[0x00, 0xFC]), Err(DecodeError::UnknownOpcode(0x3F)));
        assert_eq!(Instruction::decode(&[0x01, 0x00]), Err(DecodeError::ReservedBits(1)));
        assert_eq!(Instruction::decode(&[0x00, 0x34]), Err(DecodeError::Truncated));
        assert_eq!(Instruction::decode(&[0x00]), Err(DecodeError::Truncated));
    }

    #[test]
    fn sizes_match_encoding() {
        let all = [
            Insn::Nop,
            Insn::Movi { rd: r(3), imm: 1 },
            Insn::St { base: r(1), off: 2, rs: r(4) },
            Insn::Jcc { cond: Cond::Carry, target: 0x1000 },
            Insn::Ret,
            Insn::Out { port: 0xF002, rs: r(2) },
        ];
        for insn in all {
            assert_eq!(insn.encode().len(), insn.size() as usize, "{insn}");
        }
    }
}
