//! Translated fragment cache.
//!
//! A fragment is a predecoded straight-line run of guest instructions that
//! starts at a guest entry address and ends at the first control transfer,
//! at a decode fault, or after [`MAX_FRAGMENT_OPS`] instructions. Fragments
//! are found through an open-addressing table keyed by guest entry address;
//! indirect branches (`JMPR`, `RET`) always go through that table, while
//! direct exits are back-patched with the target's fragment index the first
//! time they execute.

use vxa_isa::{Cond, Instruction, Reg};

use crate::TrapKind;

pub const MAX_FRAGMENT_OPS: usize = 128;

pub type FragmentId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Exit {
    Jump { target: u32 },
    Call { target: u32, ret: u32 },
    Branch { cond: Cond, ra: Reg, rb: Reg, target: u32, next: u32 },
    Indirect { rs: Reg },
    Ret,
    Sys { num: u8, next: u32 },
    Fallthrough { next: u32 },
    Fault { kind: TrapKind, vaddr: u32 },
}

/// How a fragment hands control onward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    /// Unconditional direct transfer (`JMP`, `CALL`).
    Direct(u32),
    /// Two-way conditional branch: taken target, fall-through.
    Conditional(u32, u32),
    /// Target known only at run time (`JMPR`, `RET`).
    Indirect,
    Syscall,
    /// Length cap reached; continues at the next instruction.
    Fallthrough(u32),
    /// Decoding failed; executing the exit raises this trap.
    Trap(TrapKind),
}

#[derive(Clone, Debug)]
pub struct Fragment {
    pub(crate) entry: u32,
    pub(crate) ops: Vec<Instruction>,
    pub(crate) exit: Exit,
    pub(crate) exit_pc: u32,
    /// Back-patched direct successors: slot 0 is the taken/only target,
    /// slot 1 the fall-through of a conditional branch.
    pub(crate) links: [Option<FragmentId>; 2],
}

impl Fragment {
    pub fn entry(&self) -> u32 {
        self.entry
    }

    /// Number of predecoded body instructions, not counting the exit.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[Instruction] {
        &self.ops
    }

    /// Address of the instruction that ends the fragment.
    pub fn exit_pc(&self) -> u32 {
        self.exit_pc
    }

    pub fn exit_kind(&self) -> ExitKind {
        match self.exit {
            Exit::Jump { target } | Exit::Call { target, .. } => ExitKind::Direct(target),
            Exit::Branch { target, next, .. } => ExitKind::Conditional(target, next),
            Exit::Indirect { .. } | Exit::Ret => ExitKind::Indirect,
            Exit::Sys { .. } => ExitKind::Syscall,
            Exit::Fallthrough { next } => ExitKind::Fallthrough(next),
            Exit::Fault { kind, .. } => ExitKind::Trap(kind),
        }
    }

    /// Address of body instruction `index` (or of the exit when `index == len`).
    pub(crate) fn pc_of(&self, index: usize) -> u32 {
        self.ops[..index].iter().fold(self.entry, |pc, op| pc.wrapping_add(op.len() as u32))
    }
}

pub(crate) fn exit_for(insn: Instruction, next: u32) -> Exit {
    match insn {
        Instruction::Jmp { target } => Exit::Jump { target },
        Instruction::Call { target } => Exit::Call { target, ret: next },
        Instruction::Branch { cond, ra, rb, target } => Exit::Branch { cond, ra, rb, target, next },
        Instruction::Jmpr { rs } => Exit::Indirect { rs },
        Instruction::Ret => Exit::Ret,
        Instruction::Sys { num } => Exit::Sys { num, next },
        _ => Exit::Fallthrough { next },
    }
}

const EMPTY: u32 = u32::MAX;

/// Open-addressing hash table from guest entry address to fragment index.
#[derive(Clone, Debug)]
pub(crate) struct EntryTable {
    keys: Vec<u32>,
    values: Vec<FragmentId>,
    len: usize,
    shift: u32,
}

impl EntryTable {
    pub fn new() -> EntryTable {
        EntryTable::with_bits(8)
    }

    fn with_bits(bits: u32) -> EntryTable {
        let cap = 1usize << bits;
        EntryTable { keys: vec![0; cap], values: vec![EMPTY; cap], len: 0, shift: 32 - bits }
    }

    #[inline(always)]
    fn slot(&self, key: u32) -> usize {
        (key.wrapping_mul(0x9E37_79B1) >> self.shift) as usize
    }

    #[inline]
    pub fn get(&self, key: u32) -> Option<FragmentId> {
        let mask = self.keys.len() - 1;
        let mut i = self.slot(key);
        loop {
            let v = self.values[i];
            if v == EMPTY {
                return None;
            }
            if self.keys[i] == key {
                return Some(v);
            }
            i = (i + 1) & mask;
        }
    }

    pub fn insert(&mut self, key: u32, value: FragmentId) {
        if (self.len + 1) * 2 > self.keys.len() {
            self.grow();
        }
        let mask = self.keys.len() - 1;
        let mut i = self.slot(key);
        loop {
            if self.values[i] == EMPTY {
                self.keys[i] = key;
                self.values[i] = value;
                self.len += 1;
                return;
            }
            if self.keys[i] == key {
                self.values[i] = value;
                return;
            }
            i = (i + 1) & mask;
        }
    }

    fn grow(&mut self) {
        let bits = 32 - self.shift + 1;
        let old = std::mem::replace(self, EntryTable::with_bits(bits));
        for (k, v) in old.keys.into_iter().zip(old.values) {
            if v != EMPTY {
                self.insert(k, v);
            }
        }
    }

    pub fn clear(&mut self) {
        *self = EntryTable::new();
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.len
    }
}

#[derive(Clone, Debug)]
pub(crate) struct FragmentCache {
    pub frags: Vec<Fragment>,
    pub table: EntryTable,
}

impl FragmentCache {
    pub fn new() -> FragmentCache {
        FragmentCache { frags: Vec::new(), table: EntryTable::new() }
    }

    pub fn insert(&mut self, frag: Fragment) -> FragmentId {
        let id = self.frags.len() as FragmentId;
        self.table.insert(frag.entry, id);
        self.frags.push(frag);
        id
    }

    /// Drops every fragment and link.
    pub fn flush(&mut self) {
        self.frags.clear();
        self.table.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_insert_get_and_grow() {
        let mut t = EntryTable::new();
        for k in 0..10_000u32 {
            t.insert(k * 7 + 0x1000, k);
        }
        assert_eq!(t.len(), 10_000);
        for k in 0..10_000u32 {
            assert_eq!(t.get(k * 7 + 0x1000), Some(k));
        }
        assert_eq!(t.get(3), None);
        t.insert(0x1000, 42);
        assert_eq!(t.get(0x1000), Some(42));
        assert_eq!(t.len(), 10_000);
        t.clear();
        assert_eq!(t.get(0x1000), None);
    }

    #[test]
    fn colliding_keys_probe_linearly() {
        let mut t = EntryTable::new();
        // Multiples of 2^24 share their top hash bits often enough to collide.
        let keys: Vec<u32> = (0..64).map(|i| i << 24).collect();
        for (i, &k) in keys.iter().enumerate() {
            t.insert(k, i as u32);
        }
        for (i, &k) in keys.iter().enumerate() {
            assert_eq!(t.get(k), Some(i as u32));
        }
    }
}
