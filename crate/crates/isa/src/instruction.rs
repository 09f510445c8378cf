//! Instruction model and the binary encoding of VXA-32.
//!
//! Every instruction starts with a one-byte opcode that alone determines the
//! encoded length. Register operands are packed two per byte, high nibble
//! first; a nibble above 7, or a non-zero nibble in an unused slot, makes the
//! encoding invalid so that decoding and encoding are exact inverses.

use std::fmt;

use thiserror::Error;

/// General purpose register index, `r0` through `r7`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reg(u8);

impl Reg {
    pub const R0: Reg = Reg(0);
    pub const R1: Reg = Reg(1);
    pub const R2: Reg = Reg(2);
    pub const R3: Reg = Reg(3);
    pub const R4: Reg = Reg(4);
    pub const R5: Reg = Reg(5);
    pub const R6: Reg = Reg(6);
    pub const R7: Reg = Reg(7);
    /// Stack pointer by convention.
    pub const SP: Reg = Reg(7);

    pub const fn new(index: u8) -> Option<Reg> {
        if index < 8 {
            Some(Reg(index))
        } else {
            None
        }
    }

    #[inline]
    pub const fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AluOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Sar,
    Mul,
    DivU,
    RemU,
}

impl AluOp {
    pub const ALL: [AluOp; 11] = [
        AluOp::Add,
        AluOp::Sub,
        AluOp::And,
        AluOp::Or,
        AluOp::Xor,
        AluOp::Shl,
        AluOp::Shr,
        AluOp::Sar,
        AluOp::Mul,
        AluOp::DivU,
        AluOp::RemU,
    ];

    fn opcode(self) -> u8 {
        0x10 + self as u8
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            AluOp::Add => "ADD",
            AluOp::Sub => "SUB",
            AluOp::And => "AND",
            AluOp::Or => "OR",
            AluOp::Xor => "XOR",
            AluOp::Shl => "SHL",
            AluOp::Shr => "SHR",
            AluOp::Sar => "SAR",
            AluOp::Mul => "MUL",
            AluOp::DivU => "DIVU",
            AluOp::RemU => "REMU",
        }
    }
}

/// Branch condition. `Lt`/`Ge` compare as signed, the `U` variants as unsigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    Eq,
    Ne,
    LtU,
    GeU,
    Lt,
    Ge,
}

impl Cond {
    pub const ALL: [Cond; 6] = [Cond::Eq, Cond::Ne, Cond::LtU, Cond::GeU, Cond::Lt, Cond::Ge];

    fn opcode(self) -> u8 {
        0x32 + self as u8
    }

    #[inline]
    pub fn holds(self, a: u32, b: u32) -> bool {
        match self {
            Cond::Eq => a == b,
            Cond::Ne => a != b,
            Cond::LtU => a < b,
            Cond::GeU => a >= b,
            Cond::Lt => (a as i32) < (b as i32),
            Cond::Ge => (a as i32) >= (b as i32),
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Cond::Eq => "BEQ",
            Cond::Ne => "BNE",
            Cond::LtU => "BLTU",
            Cond::GeU => "BGEU",
            Cond::Lt => "BLT",
            Cond::Ge => "BGE",
        }
    }
}

/// Memory access width. Byte loads zero-extend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Width {
    Word,
    Byte,
}

impl Width {
    pub fn bytes(self) -> u32 {
        match self {
            Width::Word => 4,
            Width::Byte => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Instruction {
    Movi { rd: Reg, imm: u32 },
    Mov { rd: Reg, rs: Reg },
    Alu { op: AluOp, rd: Reg, rs: Reg },
    Addi { rd: Reg, imm: u32 },
    Load { width: Width, rd: Reg, base: Reg, disp: i16 },
    Store { width: Width, src: Reg, base: Reg, disp: i16 },
    Jmp { target: u32 },
    Jmpr { rs: Reg },
    Branch { cond: Cond, ra: Reg, rb: Reg, target: u32 },
    Call { target: u32 },
    Ret,
    Sys { num: u8 },
}

pub mod opcode {
    pub const MOVI: u8 = 0x01;
    pub const MOV: u8 = 0x02;
    pub const ALU_FIRST: u8 = 0x10;
    pub const ALU_LAST: u8 = 0x1A;
    pub const ADDI: u8 = 0x1B;
    pub const LDW: u8 = 0x20;
    pub const LDB: u8 = 0x21;
    pub const STW: u8 = 0x22;
    pub const STB: u8 = 0x23;
    pub const JMP: u8 = 0x30;
    pub const JMPR: u8 = 0x31;
    pub const BRANCH_FIRST: u8 = 0x32;
    pub const BRANCH_LAST: u8 = 0x37;
    pub const CALL: u8 = 0x40;
    pub const RET: u8 = 0x41;
    pub const SYS: u8 = 0x50;
}

/// Longest encoding of any instruction.
pub const MAX_INSTRUCTION_LEN: usize = 6;

/// Encoded length for an opcode byte, or `None` if the opcode is unassigned.
pub const fn length_of(op: u8) -> Option<usize> {
    match op {
        opcode::MOVI | opcode::ADDI => Some(6),
        opcode::MOV | opcode::JMPR | opcode::RET | opcode::SYS => Some(2),
        opcode::ALU_FIRST..=opcode::ALU_LAST => Some(2),
        opcode::LDW..=opcode::STB => Some(4),
        opcode::JMP | opcode::CALL => Some(5),
        opcode::BRANCH_FIRST..=opcode::BRANCH_LAST => Some(6),
        _ => None,
    }
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("invalid opcode byte {0:#04x}")]
    InvalidOpcode(u8),
    #[error("invalid operand encoding for opcode {0:#04x}")]
    InvalidOperand(u8),
    /// The byte slice ended before the instruction did.
    #[error("instruction needs {needed} bytes, only {available} available")]
    Truncated { needed: usize, available: usize },
}

impl Instruction {
    pub fn opcode(&self) -> u8 {
        match *self {
            Instruction::Movi { .. } => opcode::MOVI,
            Instruction::Mov { .. } => opcode::MOV,
            Instruction::Alu { op, .. } => op.opcode(),
            Instruction::Addi { .. } => opcode::ADDI,
            Instruction::Load { width: Width::Word, .. } => opcode::LDW,
            Instruction::Load { width: Width::Byte, .. } => opcode::LDB,
            Instruction::Store { width: Width::Word, .. } => opcode::STW,
            Instruction::Store { width: Width::Byte, .. } => opcode::STB,
            Instruction::Jmp { .. } => opcode::JMP,
            Instruction::Jmpr { .. } => opcode::JMPR,
            Instruction::Branch { cond, .. } => cond.opcode(),
            Instruction::Call { .. } => opcode::CALL,
            Instruction::Ret => opcode::RET,
            Instruction::Sys { .. } => opcode::SYS,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        // Every constructible instruction has an assigned opcode.
        length_of(self.opcode()).unwrap_or(0)
    }

    /// True for instructions that end a straight-line run of code.
    #[inline]
    pub fn is_control_transfer(&self) -> bool {
        matches!(
            self,
            Instruction::Jmp { .. }
                | Instruction::Jmpr { .. }
                | Instruction::Branch { .. }
                | Instruction::Call { .. }
                | Instruction::Ret
                | Instruction::Sys { .. }
        )
    }

    /// Appends the encoding to `out`.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.push(self.opcode());
        match *self {
            Instruction::Movi { rd, imm } | Instruction::Addi { rd, imm } => {
                out.push(pack(rd, Reg::R0));
                out.extend_from_slice(&imm.to_le_bytes());
            }
            Instruction::Mov { rd, rs } | Instruction::Alu { rd, rs, .. } => out.push(pack(rd, rs)),
            Instruction::Load { rd, base, disp, .. } => {
                out.push(pack(rd, base));
                out.extend_from_slice(&disp.to_le_bytes());
            }
            Instruction::Store { src, base, disp, .. } => {
                out.push(pack(src, base));
                out.extend_from_slice(&disp.to_le_bytes());
            }
            Instruction::Jmp { target } | Instruction::Call { target } => {
                out.extend_from_slice(&target.to_le_bytes());
            }
            Instruction::Jmpr { rs } => out.push(pack(Reg::R0, rs)),
            Instruction::Branch { ra, rb, target, .. } => {
                out.push(pack(ra, rb));
                out.extend_from_slice(&target.to_le_bytes());
            }
            Instruction::Ret => out.push(0),
            Instruction::Sys { num } => out.push(num),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MAX_INSTRUCTION_LEN);
        self.encode_into(&mut out);
        out
    }

    /// Decodes one instruction from the start of `bytes`.
    ///
    /// Never reads beyond `length_of(bytes[0])` bytes; a short slice yields
    /// [`DecodeError::Truncated`] after the opcode has been validated.
    pub fn decode(bytes: &[u8]) -> Result<Instruction, DecodeError> {
        let Some(&op) = bytes.first() else {
            return Err(DecodeError::Truncated { needed: 1, available: 0 });
        };
        let len = length_of(op).ok_or(DecodeError::InvalidOpcode(op))?;
        if bytes.len() < len {
            return Err(DecodeError::Truncated { needed: len, available: bytes.len() });
        }
        let b = &bytes[..len];
        let regs = || unpack(op, b[1]);
        let imm32 = |at: usize| u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]]);
        let disp = || i16::from_le_bytes([b[2], b[3]]);

        let insn = match op {
            opcode::MOVI | opcode::ADDI => {
                let (rd, zero) = regs()?;
                if zero != Reg::R0 {
                    return Err(DecodeError::InvalidOperand(op));
                }
                if op == opcode::MOVI {
                    Instruction::Movi { rd, imm: imm32(2) }
                } else {
                    Instruction::Addi { rd, imm: imm32(2) }
                }
            }
            opcode::MOV => {
                let (rd, rs) = regs()?;
                Instruction::Mov { rd, rs }
            }
            opcode::ALU_FIRST..=opcode::ALU_LAST => {
                let (rd, rs) = regs()?;
                let alu = AluOp::ALL[(op - opcode::ALU_FIRST) as usize];
                Instruction::Alu { op: alu, rd, rs }
            }
            opcode::LDW | opcode::LDB => {
                let (rd, base) = regs()?;
                let width = if op == opcode::LDW { Width::Word } else { Width::Byte };
                Instruction::Load { width, rd, base, disp: disp() }
            }
            opcode::STW | opcode::STB => {
                let (src, base) = regs()?;
                let width = if op == opcode::STW { Width::Word } else { Width::Byte };
                Instruction::Store { width, src, base, disp: disp() }
            }
            opcode::JMP => Instruction::Jmp { target: imm32(1) },
            opcode::CALL => Instruction::Call { target: imm32(1) },
            opcode::JMPR => {
                let (zero, rs) = regs()?;
                if zero != Reg::R0 {
                    return Err(DecodeError::InvalidOperand(op));
                }
                Instruction::Jmpr { rs }
            }
            opcode::BRANCH_FIRST..=opcode::BRANCH_LAST => {
                let (ra, rb) = regs()?;
                let cond = Cond::ALL[(op - opcode::BRANCH_FIRST) as usize];
                Instruction::Branch { cond, ra, rb, target: imm32(2) }
            }
            opcode::RET => {
                if b[1] != 0 {
                    return Err(DecodeError::InvalidOperand(op));
                }
                Instruction::Ret
            }
            opcode::SYS => Instruction::Sys { num: b[1] },
            _ => return Err(DecodeError::InvalidOpcode(op)),
        };
        Ok(insn)
    }
}

fn pack(hi: Reg, lo: Reg) -> u8 {
    (hi.0 << 4) | lo.0
}

fn unpack(op: u8, byte: u8) -> Result<(Reg, Reg), DecodeError> {
    match (Reg::new(byte >> 4), Reg::new(byte & 0x0F)) {
        (Some(hi), Some(lo)) => Ok((hi, lo)),
        _ => Err(DecodeError::InvalidOperand(op)),
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mem = |f: &mut fmt::Formatter<'_>, base: Reg, disp: i16| {
            if disp < 0 {
                write!(f, "[{base}-{}]", -(disp as i32))
            } else {
                write!(f, "[{base}+{disp}]")
            }
        };
        match *self {
            Instruction::Movi { rd, imm } => write!(f, "MOVI {rd}, {imm:#x}"),
            Instruction::Mov { rd, rs } => write!(f, "MOV {rd}, {rs}"),
            Instruction::Alu { op, rd, rs } => write!(f, "{} {rd}, {rs}", op.mnemonic()),
            Instruction::Addi { rd, imm } => write!(f, "ADDI {rd}, {}", imm as i32),
            Instruction::Load { width, rd, base, disp } => {
                let m = if width == Width::Word { "LDW" } else { "LDB" };
                write!(f, "{m} {rd}, ")?;
                mem(f, base, disp)
            }
            Instruction::Store { width, src, base, disp } => {
                let m = if width == Width::Word { "STW" } else { "STB" };
                write!(f, "{m} {src}, ")?;
                mem(f, base, disp)
            }
            Instruction::Jmp { target } => write!(f, "JMP {target:#x}"),
            Instruction::Jmpr { rs } => write!(f, "JMPR {rs}"),
            Instruction::Branch { cond, ra, rb, target } => {
                write!(f, "{} {ra}, {rb}, {target:#x}", cond.mnemonic())
            }
            Instruction::Call { target } => write!(f, "CALL {target:#x}"),
            Instruction::Ret => write!(f, "RET"),
            Instruction::Sys { num } => write!(f, "SYS {num}"),
        }
    }
}
