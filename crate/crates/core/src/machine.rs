//! The simulated CPU.
//!
//! Sixteen 64-bit general registers, each carrying one taint bit, a bank of
//! model-specific registers used as key storage, and flat byte-addressed RAM
//! that carries no taint at all. Key material enters the register file only
//! through MSR reads, the secret input port, or loads from a declared
//! key-input buffer. Storing a tainted register is the violation the engines
//! must never commit: enforcing mode refuses the store, audit mode performs
//! it and records it.
//!
//! Multi-byte RAM accesses are big-endian so that a 32-bit load of a block
//! yields an AES column word directly.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aes::tables;
use crate::image::{ImageMeta, MemoryImage};

pub type Addr = u32;

pub const NUM_REGS: usize = 16;
pub const NUM_MSR_SLOTS: usize = 4;
/// Sixteen registers of eight bytes each.
pub const INTERRUPT_FRAME_LEN: usize = NUM_REGS * 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Reg {
    Rax = 0,
    Rcx,
    Rdx,
    Rbx,
    Rsp,
    Rbp,
    Rsi,
    Rdi,
    R8,
    R9,
    R10,
    R11,
    R12,
    R13,
    R14,
    R15,
}

impl Reg {
    pub const ALL: [Reg; NUM_REGS] = [
        Reg::Rax,
        Reg::Rcx,
        Reg::Rdx,
        Reg::Rbx,
        Reg::Rsp,
        Reg::Rbp,
        Reg::Rsi,
        Reg::Rdi,
        Reg::R8,
        Reg::R9,
        Reg::R10,
        Reg::R11,
        Reg::R12,
        Reg::R13,
        Reg::R14,
        Reg::R15,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Reg::Rax => "rax",
            Reg::Rcx => "rcx",
            Reg::Rdx => "rdx",
            Reg::Rbx => "rbx",
            Reg::Rsp => "rsp",
            Reg::Rbp => "rbp",
            Reg::Rsi => "rsi",
            Reg::Rdi => "rdi",
            Reg::R8 => "r8",
            Reg::R9 => "r9",
            Reg::R10 => "r10",
            Reg::R11 => "r11",
            Reg::R12 => "r12",
            Reg::R13 => "r13",
            Reg::R14 => "r14",
            Reg::R15 => "r15",
        }
    }

    #[inline(always)]
    fn idx(self) -> usize {
        self as usize
    }

    #[inline(always)]
    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AluOp {
    Xor,
    And,
    Or,
    Add,
    Shl,
    Shr,
}

impl AluOp {
    #[inline(always)]
    fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            AluOp::Xor => a ^ b,
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Add => a.wrapping_add(b),
            AluOp::Shl => a << (b & 63),
            AluOp::Shr => a >> (b & 63),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Reg(Reg),
    Imm(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Width {
    Byte,
    Dword,
    Qword,
}

impl Width {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            Width::Byte => 1,
            Width::Dword => 4,
            Width::Qword => 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableFamily {
    /// Forward round columns.
    Te,
    /// Inverse round columns.
    Td,
    /// InvMixColumns of a raw byte.
    Imc,
    /// S-box output placed at a row position.
    Sub,
    /// Inverse S-box output placed at a row position.
    InvSub,
}

/// One of the constant 256-entry word tables, selected by family and row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub family: TableFamily,
    pub row: u8,
}

impl Table {
    pub const fn new(family: TableFamily, row: u8) -> Table {
        Table {
            family,
            row: row & 3,
        }
    }

    #[inline(always)]
    fn words(self) -> &'static [u32; 256] {
        let r = self.row as usize;
        match self.family {
            TableFamily::Te => &tables::TE[r],
            TableFamily::Td => &tables::TD[r],
            TableFamily::Imc => &tables::IMC[r],
            TableFamily::Sub => &tables::SUB[r],
            TableFamily::InvSub => &tables::INV_SUB[r],
        }
    }
}

/// The machine's instruction set. Lookups index with the low byte of the
/// index register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instr {
    LoadImm {
        dst: Reg,
        imm: u64,
    },
    Mov {
        dst: Reg,
        src: Reg,
    },
    Alu {
        op: AluOp,
        dst: Reg,
        lhs: Reg,
        rhs: Operand,
    },
    Lookup {
        dst: Reg,
        table: Table,
        index: Reg,
    },
    Load {
        dst: Reg,
        base: Reg,
        offset: u32,
        width: Width,
    },
    Store {
        src: Reg,
        base: Reg,
        offset: u32,
        width: Width,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Storing a tainted register fails.
    Enforcing,
    /// Storing a tainted register succeeds and is logged.
    Audit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskablePolicy {
    /// Held pending and delivered when interrupts are re-enabled.
    Defer,
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InterruptKind {
    Maskable,
    Nmi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Privilege {
    Kernel,
    User,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub ram_size: usize,
    pub mode: Mode,
    /// Start of the 128-byte window interrupt entry saves registers into.
    pub interrupt_stack: Addr,
    /// Significant key bits held by each MSR slot.
    pub msr_key_bits: u32,
    pub msr_user_read: bool,
    pub maskable_policy: MaskablePolicy,
    /// Interrupt handler zeroes tainted registers before saving them.
    pub nmi_scrub: bool,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            ram_size: 1 << 20,
            mode: Mode::Enforcing,
            interrupt_stack: 0x1000,
            msr_key_bits: 32,
            msr_user_read: false,
            maskable_policy: MaskablePolicy::Defer,
            nmi_scrub: false,
        }
    }
}

impl MachineConfig {
    pub fn audit() -> Self {
        MachineConfig {
            mode: Mode::Audit,
            ..Default::default()
        }
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MsrBank {
    slots: [u64; NUM_MSR_SLOTS],
    written: u8,
    key_bits: u32,
    user_read_enabled: bool,
}

impl MsrBank {
    fn new(key_bits: u32, user_read_enabled: bool) -> Self {
        MsrBank {
            slots: [0; NUM_MSR_SLOTS],
            written: 0,
            key_bits: key_bits.clamp(1, 64),
            user_read_enabled,
        }
    }

    fn mask(&self) -> u64 {
        if self.key_bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.key_bits) - 1
        }
    }

    /// Total key capacity in bits.
    pub fn capacity_bits(&self) -> u32 {
        self.key_bits * NUM_MSR_SLOTS as u32
    }

    /// True once every slot has been written.
    pub fn is_provisioned(&self) -> bool {
        self.written == (1 << NUM_MSR_SLOTS) - 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    Store,
    InterruptFrame(InterruptKind),
}

/// A tainted register value that reached RAM.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub reg: Reg,
    pub addr: Addr,
    pub value: u64,
    /// Instruction count when it happened.
    pub at: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunKind {
    Unwrap,
    Wrap,
    Payload,
}

/// Engine progress markers recorded in the trace. They are not instructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Marker {
    WindowOpen,
    MasterLoaded,
    MasterReleased,
    RoundDone { run: RunKind, round: u8 },
    WindowClose,
    Retry,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceEvent {
    Exec(Instr),
    Marker(Marker),
    Interrupt { kind: InterruptKind, taken: bool },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    #[error("tainted {reg} stored to {addr:#x} in enforcing mode")]
    TaintSpill { reg: Reg, addr: Addr },
    #[error("address {addr:#x}+{len} outside RAM")]
    OutOfRange { addr: u64, len: usize },
    #[error("stack pointer is not available as a destination")]
    StackPointer,
    #[error("unprivileged MSR read of slot {0}")]
    Unprivileged(usize),
    #[error("no MSR slot {0}")]
    BadSlot(usize),
    #[error("out of machine memory allocating {0} bytes")]
    OutOfMemory(usize),
    #[error("invalid machine configuration: {0}")]
    Config(String),
}

/// Permission to clear taint on the output of one complete cipher run.
/// Only the cipher engines can mint one.
#[derive(Debug)]
pub struct DeclassifyToken {
    _private: (),
}

impl DeclassifyToken {
    pub(crate) fn mint() -> Self {
        DeclassifyToken { _private: () }
    }
}

/// Fixed scratch buffers every engine uses for host I/O.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IoArea {
    pub key_input: Addr,
    pub block_in: Addr,
    pub block_out: Addr,
}

const HEAP_START: Addr = 0x2000;

pub struct Machine {
    regs: [u64; NUM_REGS],
    taint: u16,
    msr: MsrBank,
    ram: Vec<u8>,
    interrupts_enabled: bool,
    violations: Vec<Violation>,
    config: MachineConfig,
    icount: u64,
    rounds: u64,
    stores: u64,
    next_event: u64,
    storm_period: Option<u64>,
    nmi_at: BTreeSet<u64>,
    pending_maskable: bool,
    scrubbed: bool,
    key_inputs: Vec<Range<Addr>>,
    brk: Addr,
    io: IoArea,
    trace: Option<Vec<TraceEvent>>,
    marks: Vec<(u64, Marker)>,
}

impl fmt::Debug for Machine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Machine")
            .field("ram_size", &self.ram.len())
            .field("mode", &self.config.mode)
            .field("interrupts_enabled", &self.interrupts_enabled)
            .field("taint", &format_args!("{:#06x}", self.taint))
            .field("violations", &self.violations.len())
            .field("icount", &self.icount)
            .finish()
    }
}

impl Machine {
    pub fn new(config: MachineConfig) -> Result<Machine, MachineError> {
        let stack_end = config.interrupt_stack as usize + INTERRUPT_FRAME_LEN;
        if stack_end > HEAP_START as usize {
            return Err(MachineError::Config(format!(
                "interrupt stack must end below {HEAP_START:#x}"
            )));
        }
        if config.ram_size < HEAP_START as usize + 4096 || config.ram_size > u32::MAX as usize {
            return Err(MachineError::Config(format!(
                "unusable RAM size {}",
                config.ram_size
            )));
        }
        let mut m = Machine {
            regs: [0; NUM_REGS],
            taint: 0,
            msr: MsrBank::new(config.msr_key_bits, config.msr_user_read),
            ram: vec![0; config.ram_size],
            interrupts_enabled: true,
            violations: Vec::new(),
            icount: 0,
            rounds: 0,
            stores: 0,
            next_event: u64::MAX,
            storm_period: None,
            nmi_at: BTreeSet::new(),
            pending_maskable: false,
            scrubbed: false,
            key_inputs: Vec::new(),
            brk: HEAP_START,
            io: IoArea {
                key_input: 0,
                block_in: 0,
                block_out: 0,
            },
            trace: None,
            marks: Vec::new(),
            config,
        };
        m.io = IoArea {
            key_input: m.alloc(16)?,
            block_in: m.alloc(16)?,
            block_out: m.alloc(16)?,
        };
        Ok(m)
    }

    pub fn config(&self) -> &MachineConfig {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn io(&self) -> IoArea {
        self.io
    }

    pub fn ram_size(&self) -> usize {
        self.ram.len()
    }

    /// Bump-allocates `len` bytes of RAM, 16-byte aligned.
    pub fn alloc(&mut self, len: usize) -> Result<Addr, MachineError> {
        let start = self.brk;
        let end = (start as usize + len + 15) & !15;
        if end > self.ram.len() {
            return Err(MachineError::OutOfMemory(len));
        }
        self.brk = end as Addr;
        Ok(start)
    }

    // ---- register file ----

    pub fn reg(&self, r: Reg) -> u64 {
        self.regs[r.idx()]
    }

    pub fn is_tainted(&self, r: Reg) -> bool {
        self.taint & r.bit() != 0
    }

    pub fn tainted_regs(&self) -> Vec<Reg> {
        Reg::ALL
            .into_iter()
            .filter(|&r| self.is_tainted(r))
            .collect()
    }

    #[inline(always)]
    fn set(&mut self, dst: Reg, value: u64, tainted: bool) -> Result<(), MachineError> {
        if dst == Reg::Rsp {
            return Err(MachineError::StackPointer);
        }
        self.regs[dst.idx()] = value;
        if tainted {
            self.taint |= dst.bit();
        } else {
            self.taint &= !dst.bit();
        }
        Ok(())
    }

    // ---- counters ----

    pub fn instruction_count(&self) -> u64 {
        self.icount
    }

    /// Completed round-function invocations.
    pub fn round_count(&self) -> u64 {
        self.rounds
    }

    pub fn store_count(&self) -> u64 {
        self.stores
    }

    pub fn reset_counters(&mut self) {
        self.icount = 0;
        self.rounds = 0;
        self.stores = 0;
        self.schedule_from(0);
    }

    pub(crate) fn note_round(&mut self) {
        self.rounds += 1;
    }

    // ---- instruction boundary and interrupts ----

    #[inline(always)]
    fn tick(&mut self) {
        if self.icount >= self.next_event {
            self.boundary_events();
        }
        self.icount += 1;
    }

    #[cold]
    #[inline(never)]
    fn boundary_events(&mut self) {
        let now = self.icount;
        if let Some(p) = self.storm_period {
            if now.is_multiple_of(p) {
                self.inject_interrupt(InterruptKind::Maskable);
            }
        }
        if self.nmi_at.remove(&now) {
            self.inject_interrupt(InterruptKind::Nmi);
        }
        self.schedule_from(now + 1);
    }

    fn schedule_from(&mut self, from: u64) {
        let storm = self.storm_period.map(|p| from.div_ceil(p) * p);
        let nmi = self.nmi_at.range(from..).next().copied();
        self.next_event = storm.into_iter().chain(nmi).min().unwrap_or(u64::MAX);
    }

    /// Delivers a maskable interrupt at every `period`-th instruction
    /// boundary; `None` stops the storm.
    pub fn set_interrupt_storm(&mut self, period: Option<u64>) {
        self.storm_period = period.filter(|&p| p > 0);
        self.schedule_from(self.icount);
    }

    /// Raises an NMI at the boundary before instruction number `at`.
    pub fn schedule_nmi(&mut self, at: u64) {
        self.nmi_at.insert(at);
        self.schedule_from(self.icount);
    }

    pub fn set_nmi_scrub(&mut self, enabled: bool) {
        self.config.nmi_scrub = enabled;
    }

    pub fn interrupts_enabled(&self) -> bool {
        self.interrupts_enabled
    }

    pub fn set_interrupts(&mut self, enabled: bool) {
        self.tick();
        self.interrupts_enabled = enabled;
        if enabled && self.pending_maskable {
            self.pending_maskable = false;
            self.take_interrupt(InterruptKind::Maskable);
        }
    }

    pub fn inject_interrupt(&mut self, kind: InterruptKind) {
        if kind == InterruptKind::Maskable && !self.interrupts_enabled {
            if self.config.maskable_policy == MaskablePolicy::Defer {
                self.pending_maskable = true;
            }
            if let Some(t) = self.trace.as_mut() {
                t.push(TraceEvent::Interrupt { kind, taken: false });
            }
            return;
        }
        self.take_interrupt(kind);
    }

    fn take_interrupt(&mut self, kind: InterruptKind) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::Interrupt { kind, taken: true });
        }
        if self.config.nmi_scrub && self.taint != 0 {
            for r in Reg::ALL {
                if self.is_tainted(r) {
                    self.regs[r.idx()] = 0;
                }
            }
            self.taint = 0;
            self.scrubbed = true;
        }
        let base = self.config.interrupt_stack;
        for (i, r) in Reg::ALL.into_iter().enumerate() {
            let addr = base + (i * 8) as Addr;
            let value = self.regs[r.idx()];
            if self.is_tainted(r) {
                self.violations.push(Violation {
                    kind: ViolationKind::InterruptFrame(kind),
                    reg: r,
                    addr,
                    value,
                    at: self.icount,
                });
            }
            let a = addr as usize;
            self.ram[a..a + 8].copy_from_slice(&value.to_be_bytes());
        }
    }

    /// True once if an interrupt handler scrubbed key registers since the
    /// last call.
    pub(crate) fn take_scrubbed(&mut self) -> bool {
        std::mem::take(&mut self.scrubbed)
    }

    // ---- execution ----

    fn check_range(&self, addr: u64, len: usize) -> Result<usize, MachineError> {
        if addr + len as u64 > self.ram.len() as u64 {
            return Err(MachineError::OutOfRange { addr, len });
        }
        Ok(addr as usize)
    }

    fn in_key_input(&self, addr: usize, len: usize) -> bool {
        self.key_inputs
            .iter()
            .any(|r| addr < r.end as usize && addr + len > r.start as usize)
    }

    #[inline(always)]
    pub fn exec(&mut self, instr: Instr) -> Result<(), MachineError> {
        self.tick();
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::Exec(instr));
        }
        match instr {
            Instr::LoadImm { dst, imm } => self.set(dst, imm, false),
            Instr::Mov { dst, src } => {
                let t = self.is_tainted(src);
                self.set(dst, self.reg(src), t)
            }
            Instr::Alu { op, dst, lhs, rhs } => {
                let (b, tb) = match rhs {
                    Operand::Reg(r) => (self.reg(r), self.is_tainted(r)),
                    Operand::Imm(i) => (i, false),
                };
                let t = self.is_tainted(lhs) | tb;
                self.set(dst, op.apply(self.reg(lhs), b), t)
            }
            Instr::Lookup { dst, table, index } => {
                let v = table.words()[(self.reg(index) & 0xff) as usize] as u64;
                let t = self.is_tainted(index);
                self.set(dst, v, t)
            }
            Instr::Load {
                dst,
                base,
                offset,
                width,
            } => {
                let n = width.len();
                let a = self.check_range(self.reg(base) + offset as u64, n)?;
                let mut buf = [0u8; 8];
                buf[8 - n..].copy_from_slice(&self.ram[a..a + n]);
                let secret = !self.key_inputs.is_empty() && self.in_key_input(a, n);
                self.set(dst, u64::from_be_bytes(buf), secret)
            }
            Instr::Store {
                src,
                base,
                offset,
                width,
            } => {
                let n = width.len();
                let a = self.check_range(self.reg(base) + offset as u64, n)?;
                if self.is_tainted(src) {
                    if self.config.mode == Mode::Enforcing {
                        return Err(MachineError::TaintSpill {
                            reg: src,
                            addr: a as Addr,
                        });
                    }
                    self.violations.push(Violation {
                        kind: ViolationKind::Store,
                        reg: src,
                        addr: a as Addr,
                        value: self.reg(src),
                        at: self.icount,
                    });
                }
                let bytes = self.reg(src).to_be_bytes();
                self.ram[a..a + n].copy_from_slice(&bytes[8 - n..]);
                self.stores += 1;
                Ok(())
            }
        }
    }

    // ---- MSRs ----

    pub fn read_msr(
        &mut self,
        slot: usize,
        dst: Reg,
        privilege: Privilege,
    ) -> Result<(), MachineError> {
        self.tick();
        if slot >= NUM_MSR_SLOTS {
            return Err(MachineError::BadSlot(slot));
        }
        if privilege == Privilege::User && !self.msr.user_read_enabled {
            return Err(MachineError::Unprivileged(slot));
        }
        self.set(dst, self.msr.slots[slot], true)
    }

    pub fn write_msr(&mut self, slot: usize, src: Reg) -> Result<(), MachineError> {
        self.tick();
        if slot >= NUM_MSR_SLOTS {
            return Err(MachineError::BadSlot(slot));
        }
        self.msr.slots[slot] = self.reg(src) & self.msr.mask();
        self.msr.written |= 1 << slot;
        Ok(())
    }

    pub fn msr_bank(&self) -> &MsrBank {
        &self.msr
    }

    /// Key material arriving on a privileged input port (the kernel RNG,
    /// for example). The destination is tainted.
    pub fn load_secret(&mut self, dst: Reg, value: u64) -> Result<(), MachineError> {
        self.tick();
        self.set(dst, value, true)
    }

    /// Marks a RAM range as holding freshly input key material; loads from
    /// it are tainted until the range is released.
    pub(crate) fn declare_key_input(&mut self, range: Range<Addr>) {
        self.key_inputs.push(range);
    }

    pub(crate) fn release_key_input(&mut self, range: &Range<Addr>) {
        self.key_inputs.retain(|r| r != range);
    }

    pub fn zeroize_registers(&mut self, regs: &[Reg]) {
        self.tick();
        for &r in regs {
            if r != Reg::Rsp {
                self.regs[r.idx()] = 0;
                self.taint &= !r.bit();
            }
        }
    }

    /// Clears taint on `regs` without changing their values.
    pub fn declassify(&mut self, regs: &[Reg], _token: DeclassifyToken) {
        self.tick();
        for &r in regs {
            self.taint &= !r.bit();
        }
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    // ---- host access ----

    /// Writes RAM from outside the CPU (device DMA, the loader).
    pub fn host_write(&mut self, addr: Addr, bytes: &[u8]) -> Result<(), MachineError> {
        let a = self.check_range(addr as u64, bytes.len())?;
        self.ram[a..a + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    pub fn host_read(&self, addr: Addr, len: usize) -> Result<&[u8], MachineError> {
        let a = self.check_range(addr as u64, len)?;
        Ok(&self.ram[a..a + len])
    }

    pub fn snapshot_ram(&self) -> MemoryImage {
        let captured_at_ms = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        MemoryImage::new(
            self.ram.clone(),
            ImageMeta {
                size: self.ram.len(),
                config_digest: self.config.digest(),
                captured_at_ms,
            },
        )
    }

    // ---- tracing ----

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.take().unwrap_or_default()
    }

    #[inline(always)]
    pub(crate) fn mark(&mut self, marker: Marker) {
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent::Marker(marker));
            self.marks.push((self.icount, marker));
        }
    }

    /// Markers seen while tracing, each with the instruction count at which
    /// it was reached. Drained by the call.
    pub fn take_marks(&mut self) -> Vec<(u64, Marker)> {
        std::mem::take(&mut self.marks)
    }
}
