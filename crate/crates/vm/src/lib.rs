//! A deterministic, fault-isolated virtual machine for VXA-32 decoders.
//!
//! Guest code runs against a private flat address space with per-page
//! permissions; every load, store and instruction fetch is bounds- and
//! permission-checked, so the worst a misbehaving guest can do is trap or
//! produce wrong output. Execution goes through a cache of predecoded
//! fragments (see [`cache`]) unless [`CacheMode::Disabled`] selects the
//! decode-every-instruction reference path; both produce identical
//! guest-visible behavior.
//!
//! A guest sees exactly five system calls, numbered as in [`vxa_isa::sys`],
//! with arguments in `r0`–`r2` and results in `r0`:
//!
//! | call      | arguments            | effect                                         |
//! |-----------|----------------------|------------------------------------------------|
//! | `exit`    | code                 | stops the machine with `Exited(code)`          |
//! | `read`    | fd, buf, len         | reads from fd 0; returns count, 0 at EOF       |
//! | `write`   | fd, buf, len         | fd 1 output, fd 2 diagnostics; returns `len`   |
//! | `setperm` | addr, len, perm      | maps/unmaps/reprotects pages; 0 or -1          |
//! | `done`    |                      | stream finished; host may rebind and resume    |
//!
//! Bad file descriptors and rejected `setperm` requests return `-1`; bad
//! buffers and unknown call numbers trap.

#![forbid(unsafe_code)]

mod binding;
pub mod cache;
mod machine;
mod memory;

use std::fmt;

use thiserror::Error;

pub use binding::SyscallBinding;
pub use cache::{ExitKind, Fragment, FragmentId, MAX_FRAGMENT_OPS};
pub use machine::Vm;

/// Default guest address space: 256 MiB.
pub const DEFAULT_MEM_LIMIT: u64 = 1 << 28;
/// Default per-stream instruction budget.
pub const DEFAULT_FUEL: u64 = 1 << 33;
/// The stack occupies the top 64 KiB of guest memory.
pub const STACK_SIZE: u64 = 64 * 1024;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CacheMode {
    /// Decode every instruction every time it runs.
    Disabled,
    /// Cache fragments, but resolve every exit through the entry table.
    Unlinked,
    /// Cache fragments and back-patch direct exits.
    #[default]
    Linked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VmConfig {
    pub mem_limit: u64,
    pub fuel: u64,
    pub cache: CacheMode,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig { mem_limit: DEFAULT_MEM_LIMIT, fuel: DEFAULT_FUEL, cache: CacheMode::Linked }
    }
}

/// Classified reasons a guest stops abnormally. The ordinal is part of the
/// CLI exit-status contract (`70 + ordinal`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrapKind {
    OutOfBounds,
    PermissionFault,
    InvalidInstruction,
    DivideByZero,
    BadSyscall,
    FuelExhausted,
    StackFault,
}

impl TrapKind {
    pub const ALL: [TrapKind; 7] = [
        TrapKind::OutOfBounds,
        TrapKind::PermissionFault,
        TrapKind::InvalidInstruction,
        TrapKind::DivideByZero,
        TrapKind::BadSyscall,
        TrapKind::FuelExhausted,
        TrapKind::StackFault,
    ];

    pub fn ordinal(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            TrapKind::OutOfBounds => "out-of-bounds",
            TrapKind::PermissionFault => "permission-fault",
            TrapKind::InvalidInstruction => "invalid-instruction",
            TrapKind::DivideByZero => "divide-by-zero",
            TrapKind::BadSyscall => "bad-syscall",
            TrapKind::FuelExhausted => "fuel-exhausted",
            TrapKind::StackFault => "stack-fault",
        }
    }
}

impl fmt::Display for TrapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TrapReason {
    pub kind: TrapKind,
    /// Faulting address; the instruction address for non-memory traps.
    pub vaddr: u32,
    pub pc: u32,
}

impl fmt::Display for TrapReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at pc {:#010x} (address {:#010x})", self.kind, self.pc, self.vaddr)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Status {
    Running,
    Exited(u32),
    StreamDone,
    Trapped(TrapReason),
}

/// Execution counters. `bytes_in`/`bytes_out` count every byte crossing the
/// syscall boundary.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub translations: u64,
    pub lookups: u64,
    pub lookup_hits: u64,
    pub links_patched: u64,
    pub linked_jumps: u64,
    pub indirect_branches: u64,
    pub cache_flushes: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum VmError {
    #[error("memory limit {0:#x} must be page aligned, at least twice the stack size and at most 1 GiB")]
    BadLimit(u64),
    #[error("image needs memory up to {image_end:#x}, beyond the {limit:#x} byte limit")]
    LimitExceeded { image_end: u64, limit: u64 },
    #[error("image reaches {image_end:#x}, overlapping the stack at {stack_base:#x}")]
    StackOverlap { image_end: u64, stack_base: u64 },
    #[error("machine is not runnable (status {0:?})")]
    NotResumable(Status),
}
