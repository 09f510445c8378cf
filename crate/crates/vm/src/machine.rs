use vxa_isa::{sys, AluOp, ExecutableImage, Instruction, Perm, Reg, Width, PAGE_SIZE};

use crate::binding::SyscallBinding;
use crate::cache::{exit_for, Exit, Fragment, FragmentCache, FragmentId, MAX_FRAGMENT_OPS};
use crate::memory::{Fault, Memory};
use crate::{CacheMode, Stats, Status, TrapKind, TrapReason, VmConfig, VmError, STACK_SIZE};

const NEG_ONE: u32 = u32::MAX;

/// Architectural state plus I/O. Kept apart from the fragment cache so the
/// run loop can borrow a fragment while mutating the CPU.
#[derive(Debug)]
struct Cpu {
    regs: [u32; 8],
    pc: u32,
    mem: Memory,
    fuel: u64,
    instret: u64,
    binding: SyscallBinding,
    bytes_in: u64,
    bytes_out: u64,
}

enum SysOutcome {
    Continue,
    Exit(u32),
    Done,
    /// Execute permission changed somewhere; cached code must go.
    CodeChanged,
}

impl Cpu {
    #[inline(always)]
    fn reg(&self, r: Reg) -> u32 {
        self.regs[r.index()]
    }

    #[inline(always)]
    fn set(&mut self, r: Reg, v: u32) {
        self.regs[r.index()] = v;
    }

    /// Executes one non-control instruction.
    #[inline(always)]
    fn exec(&mut self, op: &Instruction) -> Result<(), Fault> {
        match *op {
            Instruction::Movi { rd, imm } => self.set(rd, imm),
            Instruction::Mov { rd, rs } => self.set(rd, self.reg(rs)),
            Instruction::Addi { rd, imm } => self.set(rd, self.reg(rd).wrapping_add(imm)),
            Instruction::Alu { op, rd, rs } => {
                let a = self.reg(rd);
                let b = self.reg(rs);
                let v = match op {
                    AluOp::Add => a.wrapping_add(b),
                    AluOp::Sub => a.wrapping_sub(b),
                    AluOp::And => a & b,
                    AluOp::Or => a | b,
                    AluOp::Xor => a ^ b,
                    AluOp::Shl => a << (b & 31),
                    AluOp::Shr => a >> (b & 31),
                    AluOp::Sar => ((a as i32) >> (b & 31)) as u32,
                    AluOp::Mul => a.wrapping_mul(b),
                    AluOp::DivU => a.checked_div(b).ok_or(Fault::here(TrapKind::DivideByZero))?,
                    AluOp::RemU => a.checked_rem(b).ok_or(Fault::here(TrapKind::DivideByZero))?,
                };
                self.set(rd, v);
            }
            Instruction::Load { width, rd, base, disp } => {
                let addr = self.reg(base).wrapping_add(disp as i32 as u32);
                let v = match width {
                    Width::Word => self.mem.load_u32(addr)?,
                    Width::Byte => self.mem.load_u8(addr)?,
                };
                self.set(rd, v);
            }
            Instruction::Store { width, src, base, disp } => {
                let addr = self.reg(base).wrapping_add(disp as i32 as u32);
                let v = self.reg(src);
                match width {
                    Width::Word => self.mem.store_u32(addr, v)?,
                    Width::Byte => self.mem.store_u8(addr, v)?,
                }
            }
            _ => unreachable!("control transfer {op} inside a fragment body"),
        }
        Ok(())
    }

    fn push(&mut self, value: u32) -> Result<(), Fault> {
        let sp = self.reg(Reg::SP).wrapping_sub(4);
        self.mem.store_u32(sp, value).map_err(|_| Fault::at(TrapKind::StackFault, sp))?;
        self.set(Reg::SP, sp);
        Ok(())
    }

    fn pop(&mut self) -> Result<u32, Fault> {
        let sp = self.reg(Reg::SP);
        let v = self.mem.load_u32(sp).map_err(|_| Fault::at(TrapKind::StackFault, sp))?;
        self.set(Reg::SP, sp.wrapping_add(4));
        Ok(v)
    }

    fn syscall(&mut self, num: u8) -> Result<SysOutcome, Fault> {
        let (a0, a1, a2) = (self.regs[0], self.regs[1], self.regs[2]);
        match num {
            sys::EXIT => Ok(SysOutcome::Exit(a0)),
            sys::DONE => Ok(SysOutcome::Done),
            sys::READ => {
                if a0 != 0 {
                    self.regs[0] = NEG_ONE;
                    return Ok(SysOutcome::Continue);
                }
                let at = self.mem.check_range(a1, a2, Perm::W)?;
                let want = (a2 as usize).min(self.binding.remaining_input().len());
                let n = self.binding.read_into(self.mem.slice_mut(at, want));
                self.bytes_in += n as u64;
                self.regs[0] = n as u32;
                Ok(SysOutcome::Continue)
            }
            sys::WRITE => {
                if a0 != 1 && a0 != 2 {
                    self.regs[0] = NEG_ONE;
                    return Ok(SysOutcome::Continue);
                }
                let at = self.mem.check_range(a1, a2, Perm::R)?;
                let data = self.mem.slice(at, a2 as usize);
                if a0 == 1 {
                    self.binding.write_output(data);
                } else {
                    self.binding.write_diagnostic(data);
                }
                self.bytes_out += a2 as u64;
                self.regs[0] = a2;
                Ok(SysOutcome::Continue)
            }
            sys::SETPERM => Ok(self.setperm(a0, a1, a2)),
            _ => Err(Fault::here(TrapKind::BadSyscall)),
        }
    }

    fn setperm(&mut self, addr: u32, len: u32, perm: u32) -> SysOutcome {
        let limit = self.mem.limit();
        let stack_base = limit - STACK_SIZE;
        let end = addr as u64 + len as u64;
        let perm = u8::try_from(perm).ok().and_then(Perm::from_bits);
        let ok = match perm {
            Some(p) => {
                !p.is_wx()
                    && addr % PAGE_SIZE == 0
                    && len % PAGE_SIZE == 0
                    && end <= stack_base
            }
            None => false,
        };
        if !ok {
            self.regs[0] = NEG_ONE;
            return SysOutcome::Continue;
        }
        self.regs[0] = 0;
        if self.mem.set_perm(addr, len as u64, perm.unwrap_or(Perm::NONE)) {
            SysOutcome::CodeChanged
        } else {
            SysOutcome::Continue
        }
    }
}

/// A guest machine: one loaded decoder image with its memory, registers,
/// fuel budget, fragment cache and syscall binding.
#[derive(Debug)]
pub struct Vm {
    cpu: Cpu,
    cache: FragmentCache,
    config: VmConfig,
    status: Status,
    stats: Stats,
}

impl Vm {
    /// Loads `image` into a fresh address space of `config.mem_limit` bytes.
    ///
    /// Image segments are copied to their addresses with their permissions,
    /// a read/write stack occupies the top [`STACK_SIZE`] bytes, all registers
    /// are zero except `r7`, which holds the limit, and `pc` is the entry point.
    pub fn new(image: &ExecutableImage, config: VmConfig, binding: SyscallBinding) -> Result<Vm, VmError> {
        let limit = config.mem_limit;
        if limit > vxa_isa::MAX_GUEST_MEMORY || limit % PAGE_SIZE as u64 != 0 || limit < 2 * STACK_SIZE {
            return Err(VmError::BadLimit(limit));
        }
        let end = image.memory_end();
        if end > limit {
            return Err(VmError::LimitExceeded { image_end: end, limit });
        }
        if end > limit - STACK_SIZE {
            return Err(VmError::StackOverlap { image_end: end, stack_base: limit - STACK_SIZE });
        }

        let mut mem = Memory::new(limit);
        for seg in &image.segments {
            mem.set_perm(seg.vaddr, seg.memsz as u64, seg.perm);
            mem.load_segment(seg.vaddr, &seg.data);
        }
        mem.set_perm((limit - STACK_SIZE) as u32, STACK_SIZE, Perm::RW);

        let mut regs = [0; 8];
        regs[Reg::SP.index()] = limit as u32;
        let cpu = Cpu {
            regs,
            pc: image.entry,
            mem,
            fuel: config.fuel,
            instret: 0,
            binding,
            bytes_in: 0,
            bytes_out: 0,
        };
        Ok(Vm { cpu, cache: FragmentCache::new(), config, status: Status::Running, stats: Stats::default() })
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn config(&self) -> &VmConfig {
        &self.config
    }

    pub fn regs(&self) -> [u32; 8] {
        self.cpu.regs
    }

    pub fn pc(&self) -> u32 {
        self.cpu.pc
    }

    pub fn fuel(&self) -> u64 {
        self.cpu.fuel
    }

    /// Instructions retired since creation, across all streams.
    pub fn instret(&self) -> u64 {
        self.cpu.instret
    }

    pub fn stats(&self) -> Stats {
        Stats { bytes_in: self.cpu.bytes_in, bytes_out: self.cpu.bytes_out, ..self.stats }
    }

    pub fn memory(&self) -> &[u8] {
        self.cpu.mem.bytes()
    }

    pub fn page_perm(&self, vaddr: u32) -> Perm {
        self.cpu.mem.perm_of(vaddr)
    }

    pub fn binding(&self) -> &SyscallBinding {
        &self.cpu.binding
    }

    pub fn into_binding(self) -> SyscallBinding {
        self.cpu.binding
    }

    /// Checks a guest access of `size` bytes and returns its host offset.
    pub fn checked_access(&self, vaddr: u32, size: u32, need: Perm) -> Result<usize, TrapReason> {
        self.cpu.mem.check_range(vaddr, size, need).map_err(|f| self.trap_reason(f, self.cpu.pc))
    }

    /// Swaps in the next stream after the guest signalled `done`, refills the
    /// fuel budget and makes the machine runnable again. Returns the previous
    /// binding so its output can be collected.
    pub fn rebind(&mut self, binding: SyscallBinding) -> Result<SyscallBinding, VmError> {
        if self.status != Status::StreamDone {
            return Err(VmError::NotResumable(self.status));
        }
        self.status = Status::Running;
        self.cpu.fuel = self.config.fuel;
        Ok(std::mem::replace(&mut self.cpu.binding, binding))
    }

    /// Runs until the guest exits, finishes a stream, traps or runs out of fuel.
    pub fn run(&mut self) -> Result<Status, VmError> {
        if self.status != Status::Running {
            return Err(VmError::NotResumable(self.status));
        }
        let status = match self.config.cache {
            CacheMode::Disabled => self.run_uncached(),
            CacheMode::Unlinked | CacheMode::Linked => self.run_cached(),
        };
        self.status = status;
        Ok(status)
    }

    /// Returns the cached fragment starting at `vaddr`, translating on a miss.
    pub fn translate_fragment(&mut self, vaddr: u32) -> &Fragment {
        let id = self.resolve(vaddr);
        &self.cache.frags[id as usize]
    }

    /// Indirect-branch lookup: the fragment for `target`, or the trap a jump
    /// there would raise.
    pub fn lookup_indirect(&mut self, target: u32) -> Result<&Fragment, TrapReason> {
        let id = self.resolve(target) as usize;
        let frag = &self.cache.frags[id];
        match frag.exit {
            Exit::Fault { kind, vaddr } if frag.ops.is_empty() => {
                Err(TrapReason { kind, vaddr, pc: target })
            }
            _ => Ok(frag),
        }
    }

    pub fn cached_fragments(&self) -> usize {
        self.cache.frags.len()
    }

    fn trap_reason(&self, f: Fault, pc: u32) -> TrapReason {
        TrapReason { kind: f.kind, vaddr: f.vaddr.unwrap_or(pc), pc }
    }

    fn trap(&mut self, f: Fault, pc: u32) -> Status {
        self.cpu.pc = pc;
        Status::Trapped(self.trap_reason(f, pc))
    }

    fn out_of_fuel(&mut self, pc: u32) -> Status {
        self.trap(Fault::here(TrapKind::FuelExhausted), pc)
    }

    fn resolve(&mut self, vaddr: u32) -> FragmentId {
        self.stats.lookups += 1;
        if let Some(id) = self.cache.table.get(vaddr) {
            self.stats.lookup_hits += 1;
            return id;
        }
        self.translate(vaddr)
    }

    fn translate(&mut self, entry: u32) -> FragmentId {
        self.stats.translations += 1;
        let mut ops = Vec::new();
        let mut pc = entry;
        let exit = loop {
            if ops.len() == MAX_FRAGMENT_OPS {
                break Exit::Fallthrough { next: pc };
            }
            match self.cpu.mem.fetch(pc) {
                Err(f) => break Exit::Fault { kind: f.kind, vaddr: f.vaddr.unwrap_or(pc) },
                Ok(insn) => {
                    let next = pc.wrapping_add(insn.len() as u32);
                    if insn.is_control_transfer() {
                        break exit_for(insn, next);
                    }
                    ops.push(insn);
                    pc = next;
                }
            }
        };
        let mut links = [None, None];
        if self.config.cache == CacheMode::Linked {
            let known = |t: u32| self.cache.table.get(t);
            match exit {
                Exit::Jump { target } | Exit::Call { target, .. } => links[0] = known(target),
                Exit::Branch { target, next, .. } => links = [known(target), known(next)],
                Exit::Fallthrough { next } => links[0] = known(next),
                _ => {}
            }
        }
        self.cache.insert(Fragment { entry, ops, exit, exit_pc: pc, links })
    }

    /// Follows a direct exit, back-patching the link on first use.
    #[inline]
    fn follow(&mut self, from: FragmentId, slot: usize, target: u32) -> FragmentId {
        if self.config.cache == CacheMode::Linked {
            if let Some(id) = self.cache.frags[from as usize].links[slot] {
                self.stats.linked_jumps += 1;
                return id;
            }
            let id = self.resolve(target);
            self.cache.frags[from as usize].links[slot] = Some(id);
            self.stats.links_patched += 1;
            id
        } else {
            self.resolve(target)
        }
    }

    fn run_cached(&mut self) -> Status {
        let mut cur = self.resolve(self.cpu.pc);
        loop {
            let frag = &self.cache.frags[cur as usize];
            let cpu = &mut self.cpu;
            let n = frag.ops.len() as u64;
            if cpu.fuel >= n {
                for (i, op) in frag.ops.iter().enumerate() {
                    if let Err(f) = cpu.exec(op) {
                        cpu.fuel -= i as u64;
                        cpu.instret += i as u64;
                        let pc = frag.pc_of(i);
                        return self.trap(f, pc);
                    }
                }
                cpu.fuel -= n;
                cpu.instret += n;
            } else {
                for (i, op) in frag.ops.iter().enumerate() {
                    if cpu.fuel == 0 {
                        let pc = frag.pc_of(i);
                        return self.out_of_fuel(pc);
                    }
                    if let Err(f) = cpu.exec(op) {
                        let pc = frag.pc_of(i);
                        return self.trap(f, pc);
                    }
                    cpu.fuel -= 1;
                    cpu.instret += 1;
                }
            }

            let exit = frag.exit;
            let pc = frag.exit_pc;
            if let Exit::Fallthrough { next } = exit {
                cur = self.follow(cur, 0, next);
                continue;
            }
            if self.cpu.fuel == 0 {
                return self.out_of_fuel(pc);
            }
            cur = match exit {
                Exit::Fallthrough { .. } => unreachable!(),
                Exit::Fault { kind, vaddr } => return self.trap(Fault::at(kind, vaddr), pc),
                Exit::Jump { target } => {
                    self.retire();
                    self.follow(cur, 0, target)
                }
                Exit::Call { target, ret } => {
                    if let Err(f) = self.cpu.push(ret) {
                        return self.trap(f, pc);
                    }
                    self.retire();
                    self.follow(cur, 0, target)
                }
                Exit::Branch { cond, ra, rb, target, next } => {
                    self.retire();
                    if cond.holds(self.cpu.reg(ra), self.cpu.reg(rb)) {
                        self.follow(cur, 0, target)
                    } else {
                        self.follow(cur, 1, next)
                    }
                }
                Exit::Indirect { rs } => {
                    let target = self.cpu.reg(rs);
                    self.retire();
                    self.stats.indirect_branches += 1;
                    self.resolve(target)
                }
                Exit::Ret => {
                    let target = match self.cpu.pop() {
                        Ok(t) => t,
                        Err(f) => return self.trap(f, pc),
                    };
                    self.retire();
                    self.stats.indirect_branches += 1;
                    self.resolve(target)
                }
                Exit::Sys { num, next } => match self.cpu.syscall(num) {
                    Err(f) => return self.trap(f, pc),
                    Ok(outcome) => {
                        self.retire();
                        match outcome {
                            SysOutcome::Exit(code) => {
                                self.cpu.pc = pc;
                                return Status::Exited(code);
                            }
                            SysOutcome::Done => {
                                self.cpu.pc = next;
                                return Status::StreamDone;
                            }
                            SysOutcome::CodeChanged => {
                                self.stats.cache_flushes += 1;
                                self.cache.flush();
                                self.resolve(next)
                            }
                            SysOutcome::Continue => self.resolve(next),
                        }
                    }
                },
            };
        }
    }

    #[inline(always)]
    fn retire(&mut self) {
        self.cpu.fuel -= 1;
        self.cpu.instret += 1;
    }

    /// Reference interpreter: fetches and decodes every instruction from
    /// guest memory each time it executes.
    fn run_uncached(&mut self) -> Status {
        let mut pc = self.cpu.pc;
        loop {
            if self.cpu.fuel == 0 {
                return self.out_of_fuel(pc);
            }
            let insn = match self.cpu.mem.fetch(pc) {
                Ok(i) => i,
                Err(f) => return self.trap(f, pc),
            };
            let next = pc.wrapping_add(insn.len() as u32);
            let result = match insn {
                Instruction::Jmp { target } => Ok(target),
                Instruction::Call { target } => self.cpu.push(next).map(|_| target),
                Instruction::Branch { cond, ra, rb, target } => {
                    Ok(if cond.holds(self.cpu.reg(ra), self.cpu.reg(rb)) { target } else { next })
                }
                Instruction::Jmpr { rs } => Ok(self.cpu.reg(rs)),
                Instruction::Ret => self.cpu.pop(),
                Instruction::Sys { num } => match self.cpu.syscall(num) {
                    Ok(SysOutcome::Exit(code)) => {
                        self.retire();
                        self.cpu.pc = pc;
                        return Status::Exited(code);
                    }
                    Ok(SysOutcome::Done) => {
                        self.retire();
                        self.cpu.pc = next;
                        return Status::StreamDone;
                    }
                    Ok(SysOutcome::Continue | SysOutcome::CodeChanged) => Ok(next),
                    Err(f) => Err(f),
                },
                _ => self.cpu.exec(&insn).map(|_| next),
            };
            match result {
                Ok(target) => {
                    self.retire();
                    pc = target;
                }
                Err(f) => return self.trap(f, pc),
            }
        }
    }
}
