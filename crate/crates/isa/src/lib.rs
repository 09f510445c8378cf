//! The VXA-32 guest instruction set.
//!
//! VXA-32 is a small deterministic 32-bit ISA with eight general registers,
//! variable-length instructions and a flat paged address space. Programs are
//! packaged as VXE images: a list of page-aligned segments with read, write
//! or execute permission and an entry point. See `docs/isa.md` for the
//! assembly dialect.

pub mod asm;
pub mod image;
pub mod instruction;

pub use asm::{assemble, AsmError, AsmErrorKind, TEXT_BASE};
pub use image::{validate_image, ExecutableImage, ImageError, Perm, Segment, MAX_GUEST_MEMORY, PAGE_SIZE};
pub use instruction::{length_of, AluOp, Cond, DecodeError, Instruction, Reg, Width, MAX_INSTRUCTION_LEN};

/// System call numbers understood by the VM.
pub mod sys {
    pub const EXIT: u8 = 0;
    pub const READ: u8 = 1;
    pub const WRITE: u8 = 2;
    pub const SETPERM: u8 = 3;
    pub const DONE: u8 = 4;
}
