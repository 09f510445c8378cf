//! Guest address space: a flat byte array of `limit` bytes with one
//! permission byte per 4 KiB page. A page with no permission bits is unmapped.

use vxa_isa::{Instruction, DecodeError, Perm, MAX_INSTRUCTION_LEN, PAGE_SIZE};

use crate::TrapKind;

const PAGE_SHIFT: u32 = 12;

/// A guest fault before the faulting pc is known.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Fault {
    pub kind: TrapKind,
    /// Faulting data address; `None` means "the faulting instruction itself".
    pub vaddr: Option<u32>,
}

impl Fault {
    pub fn at(kind: TrapKind, vaddr: u32) -> Fault {
        Fault { kind, vaddr: Some(vaddr) }
    }

    pub fn here(kind: TrapKind) -> Fault {
        Fault { kind, vaddr: None }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub(crate) struct Memory {
    bytes: Vec<u8>,
    perms: Vec<u8>,
}

impl Memory {
    pub fn new(limit: u64) -> Memory {
        Memory {
            bytes: vec![0; limit as usize],
            perms: vec![0; (limit / PAGE_SIZE as u64) as usize],
        }
    }

    #[inline]
    pub fn limit(&self) -> u64 {
        self.bytes.len() as u64
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn perm_of(&self, vaddr: u32) -> Perm {
        self.perms
            .get((vaddr >> PAGE_SHIFT) as usize)
            .and_then(|&b| Perm::from_bits(b))
            .unwrap_or(Perm::NONE)
    }

    /// Checks `[vaddr, vaddr + size)` for `need`, returning the host offset.
    #[inline(always)]
    pub fn check(&self, vaddr: u32, size: u32, need: Perm) -> Result<usize, Fault> {
        let start = vaddr as usize;
        let end = start + size as usize;
        if end > self.bytes.len() {
            return Err(Fault::at(TrapKind::OutOfBounds, vaddr));
        }
        let first = start >> PAGE_SHIFT;
        let last = (end - 1) >> PAGE_SHIFT;
        let need = need.bits();
        if self.perms[first] & need != need || self.perms[last] & need != need {
            return Err(Fault::at(TrapKind::PermissionFault, vaddr));
        }
        Ok(start)
    }

    /// Like [`Memory::check`] for arbitrary lengths; every page in the range is checked.
    pub fn check_range(&self, vaddr: u32, len: u32, need: Perm) -> Result<usize, Fault> {
        if len == 0 {
            return Ok(vaddr as usize);
        }
        let start = vaddr as u64;
        let end = start + len as u64;
        if end > self.limit() {
            return Err(Fault::at(TrapKind::OutOfBounds, vaddr));
        }
        let need = need.bits();
        let pages = (start >> PAGE_SHIFT) as usize..=((end - 1) >> PAGE_SHIFT) as usize;
        if self.perms[pages].iter().any(|&p| p & need != need) {
            return Err(Fault::at(TrapKind::PermissionFault, vaddr));
        }
        Ok(start as usize)
    }

    #[inline(always)]
    pub fn load_u32(&self, vaddr: u32) -> Result<u32, Fault> {
        let at = self.check(vaddr, 4, Perm::R)?;
        Ok(u32::from_le_bytes(self.bytes[at..at + 4].try_into().unwrap()))
    }

    #[inline(always)]
    pub fn load_u8(&self, vaddr: u32) -> Result<u32, Fault> {
        let at = self.check(vaddr, 1, Perm::R)?;
        Ok(self.bytes[at] as u32)
    }

    #[inline(always)]
    pub fn store_u32(&mut self, vaddr: u32, value: u32) -> Result<(), Fault> {
        let at = self.check(vaddr, 4, Perm::W)?;
        self.bytes[at..at + 4].copy_from_slice(&value.to_le_bytes());
        Ok(())
    }

    #[inline(always)]
    pub fn store_u8(&mut self, vaddr: u32, value: u32) -> Result<(), Fault> {
        let at = self.check(vaddr, 1, Perm::W)?;
        self.bytes[at] = value as u8;
        Ok(())
    }

    pub fn slice(&self, at: usize, len: usize) -> &[u8] {
        &self.bytes[at..at + len]
    }

    pub fn slice_mut(&mut self, at: usize, len: usize) -> &mut [u8] {
        &mut self.bytes[at..at + len]
    }

    /// Copies `data` to `vaddr` without permission checks. Loader use only.
    pub fn load_segment(&mut self, vaddr: u32, data: &[u8]) {
        let at = vaddr as usize;
        self.bytes[at..at + data.len()].copy_from_slice(data);
    }

    /// Sets permissions on whole pages, zero-filling pages that were unmapped.
    /// Returns true if any page gained or lost execute permission.
    pub fn set_perm(&mut self, vaddr: u32, len: u64, perm: Perm) -> bool {
        let first = (vaddr >> PAGE_SHIFT) as usize;
        let count = (len / PAGE_SIZE as u64) as usize;
        let mut code_changed = false;
        for page in first..first + count {
            let old = self.perms[page];
            if old == 0 && perm.bits() != 0 {
                let at = page << PAGE_SHIFT;
                self.bytes[at..at + PAGE_SIZE as usize].fill(0);
            }
            code_changed |= (old ^ perm.bits()) & Perm::X.bits() != 0;
            self.perms[page] = perm.bits();
        }
        code_changed
    }

    /// Fetches and decodes the instruction at `pc`. Only bytes on executable
    /// pages are ever read.
    pub fn fetch(&self, pc: u32) -> Result<Instruction, Fault> {
        let start = pc as usize;
        if start >= self.bytes.len() {
            return Err(Fault::at(TrapKind::OutOfBounds, pc));
        }
        let x = Perm::X.bits();
        if self.perms[start >> PAGE_SHIFT] & x == 0 {
            return Err(Fault::at(TrapKind::PermissionFault, pc));
        }
        let page_end = ((start >> PAGE_SHIFT) + 1) << PAGE_SHIFT;
        let mut end = (start + MAX_INSTRUCTION_LEN).min(self.bytes.len());
        if end > page_end && self.perms[page_end >> PAGE_SHIFT] & x == 0 {
            end = page_end;
        }
        match Instruction::decode(&self.bytes[start..end]) {
            Ok(insn) => Ok(insn),
            Err(DecodeError::InvalidOpcode(_) | DecodeError::InvalidOperand(_)) => {
                Err(Fault::at(TrapKind::InvalidInstruction, pc))
            }
            Err(DecodeError::Truncated { .. }) => {
                if end == self.bytes.len() {
                    Err(Fault::at(TrapKind::OutOfBounds, end as u32))
                } else {
                    Err(Fault::at(TrapKind::PermissionFault, end as u32))
                }
            }
        }
    }
}

impl std::fmt::Debug for Memory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mapped = self.perms.iter().filter(|&&p| p != 0).count();
        f.debug_struct("Memory")
            .field("limit", &self.bytes.len())
            .field("mapped_pages", &mapped)
            .finish()
    }
}
