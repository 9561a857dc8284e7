//! Master-key lifecycle and volume-key wrapping.
//!
//! The master key is drawn from a backtracking-resistant generator and lives
//! only in the MSR bank. Each volume's first and last round keys are stored in
//! RAM wrapped under it: AES-encrypted for [`Variant::Amnesia`], XORed for
//! [`Variant::Xornesia`]. [`Variant::Plain`] is the conventional layout that
//! keeps the whole precomputed schedule in RAM.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::datapath::{
    self, encrypt_on_the_fly, key_to_state, load, load_block, load_master, state_to_key, step_key,
    store, store_block, CipherRun, IncompleteRun, ENGINE_REGS, IN, OUT, RK_HI, RK_LO,
    SET_KEY_ENTRY, TMP,
};
use crate::machine::{Addr, Machine, MachineError, Marker, Mode, RunKind, Width, NUM_MSR_SLOTS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error("random generator used before seeding")]
    Unseeded,
    #[error("no master key provisioned and generation is disabled")]
    MissingMaster,
    #[error("unwrap requires interrupts to be disabled")]
    InterruptsEnabled,
    #[error("{0} contexts carry no wrapped keys")]
    NotWrapped(Variant),
    #[error("cipher run stopped after {done} of {required} rounds")]
    Incomplete { done: u8, required: u8 },
    #[error("the plain layout stores key material and needs an audit-mode machine")]
    NeedsAudit,
}

impl From<IncompleteRun> for KeyError {
    fn from(e: IncompleteRun) -> Self {
        KeyError::Incomplete {
            done: e.done,
            required: e.required,
        }
    }
}

/// Hash-chain generator: each output is `H(state || "out" || counter)` and the
/// state then advances to `H(state || "step")`, so earlier outputs cannot be
/// recomputed from a later state.
#[derive(Clone)]
pub struct Rng {
    state: Option<[u8; 32]>,
    counter: u64,
}

impl fmt::Debug for Rng {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Rng")
            .field("seeded", &self.state.is_some())
            .field("counter", &self.counter)
            .finish()
    }
}

const TAG_OUT: &[u8] = b"out";
const TAG_STEP: &[u8] = b"step";

impl Rng {
    pub fn unseeded() -> Self {
        Rng {
            state: None,
            counter: 0,
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        Rng {
            state: Some(seed),
            counter: 0,
        }
    }

    pub fn from_u64(seed: u64) -> Self {
        Self::from_seed(Sha256::digest(seed.to_le_bytes()).into())
    }

    pub fn from_entropy() -> Self {
        Self::from_seed(rand::random())
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Exposed so tests can check the state moves on every draw.
    pub fn state_fingerprint(&self) -> Option<[u8; 32]> {
        self.state
    }

    pub fn next_block(&mut self) -> Result<[u8; 16], KeyError> {
        let state = self.state.as_mut().ok_or(KeyError::Unseeded)?;
        let out = Sha256::new()
            .chain_update(*state)
            .chain_update(TAG_OUT)
            .chain_update(self.counter.to_be_bytes())
            .finalize();
        *state = Sha256::new()
            .chain_update(*state)
            .chain_update(TAG_STEP)
            .finalize()
            .into();
        self.counter += 1;
        let mut block = [0u8; 16];
        block.copy_from_slice(&out[..16]);
        Ok(block)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Amnesia,
    Xornesia,
    Plain,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Amnesia, Variant::Xornesia, Variant::Plain];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Amnesia => "amnesia",
            Variant::Xornesia => "xornesia",
            Variant::Plain => "plain",
        }
    }

    /// Bytes of RAM a context of this variant occupies.
    pub fn context_len(self) -> usize {
        match self {
            Variant::Amnesia | Variant::Xornesia => 32,
            Variant::Plain => 20 * 16,
        }
    }

    /// Machine mode the variant's key setup can run under.
    pub fn required_mode(self) -> Mode {
        match self {
            Variant::Plain => Mode::Audit,
            _ => Mode::Enforcing,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "amnesia" => Ok(Variant::Amnesia),
            "xornesia" => Ok(Variant::Xornesia),
            "plain" | "aes" => Ok(Variant::Plain),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WhichKey {
    First,
    Last,
}

/// Per-volume key material as it sits in machine RAM. Callers hold only the
/// variant tag and the address; the bytes are opaque outside this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AesContext {
    variant: Variant,
    base: Addr,
}

impl AesContext {
    pub fn variant(&self) -> Variant {
        self.variant
    }

    /// RAM address of the context structure.
    pub fn addr(&self) -> Addr {
        self.base
    }

    pub(crate) fn wrapped_addr(&self, which: WhichKey) -> Addr {
        match which {
            WhichKey::First => self.base,
            WhichKey::Last => self.base + 16,
        }
    }

    fn read16(&self, m: &Machine, addr: Addr) -> [u8; 16] {
        m.host_read(addr, 16)
            .expect("context lies inside RAM")
            .try_into()
            .expect("16 bytes")
    }

    /// The wrapped round key as stored in RAM. `None` for plain contexts.
    pub fn wrapped(&self, m: &Machine, which: WhichKey) -> Option<[u8; 16]> {
        match self.variant {
            Variant::Plain => None,
            _ => Some(self.read16(m, self.wrapped_addr(which))),
        }
    }

    /// The 20 stored schedule quantities of a plain context.
    pub fn plain_schedules(&self, m: &Machine) -> Option<Vec<[u8; 16]>> {
        (self.variant == Variant::Plain).then(|| {
            (0..20)
                .map(|i| self.read16(m, self.base + 16 * i))
                .collect()
        })
    }

    /// Fingerprint of the stored bytes, safe to publish: for wrapped
    /// variants it hashes only ciphertext.
    pub fn fingerprint(&self, m: &Machine) -> String {
        let bytes = m
            .host_read(self.base, self.variant.context_len())
            .expect("context lies inside RAM");
        hex::encode(&Sha256::digest(bytes)[..8])
    }
}

/// Owns the generator and provisions master and volume keys on a machine.
#[derive(Debug)]
pub struct KeyMaster {
    rng: Rng,
    auto_generate: bool,
}

impl KeyMaster {
    pub fn new(rng: Rng) -> Self {
        KeyMaster {
            rng,
            auto_generate: true,
        }
    }

    /// A key master that never creates a master key on its own.
    pub fn without_generation(rng: Rng) -> Self {
        KeyMaster {
            rng,
            auto_generate: false,
        }
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }

    /// Draws a fresh 128-bit master key and writes it to the MSRs, passing
    /// only through registers.
    pub fn generate_master_key(&mut self, m: &mut Machine) -> Result<(), KeyError> {
        let mut key = self.rng.next_block()?;
        let r = write_master(m, &key);
        key.fill(0);
        if r.is_err() {
            m.zeroize_registers(&ENGINE_REGS);
        }
        r.map_err(KeyError::from)
    }

    /// Builds a context for `volume_key`, generating the master key first if
    /// none is present. The caller's buffer is zeroed before returning.
    pub fn set_key(
        &mut self,
        m: &mut Machine,
        volume_key: &mut [u8; 16],
        variant: Variant,
    ) -> Result<AesContext, KeyError> {
        if variant != Variant::Plain && !m.msr_bank().is_provisioned() {
            if !self.auto_generate {
                volume_key.fill(0);
                return Err(KeyError::MissingMaster);
            }
            self.generate_master_key(m)?;
        }
        if variant == Variant::Plain && m.mode() != Mode::Audit {
            volume_key.fill(0);
            return Err(KeyError::NeedsAudit);
        }
        let ctx = AesContext {
            variant,
            base: m.alloc(variant.context_len())?,
        };
        let input = m.io().key_input;
        let region: Range<Addr> = input..input + 16;
        m.host_write(input, volume_key)?;
        volume_key.fill(0);
        m.declare_key_input(region.clone());

        let result = match variant {
            Variant::Amnesia => set_key_amnesia(m, &ctx),
            Variant::Xornesia => set_key_xornesia(m, &ctx),
            Variant::Plain => set_key_plain(m, &ctx),
        };
        if result.is_err() {
            m.zeroize_registers(&ENGINE_REGS);
            m.host_write(input, &[0; 16])?;
            m.set_interrupts(true);
        }
        m.release_key_input(&region);
        result.map(|()| ctx)
    }
}

fn write_master(m: &mut Machine, key: &[u8; 16]) -> Result<(), MachineError> {
    m.set_interrupts(false);
    for (slot, &r) in TMP.iter().enumerate().take(NUM_MSR_SLOTS) {
        let w = u32::from_be_bytes(key[4 * slot..4 * slot + 4].try_into().unwrap());
        m.load_secret(r, w as u64)?;
        m.write_msr(slot, r)?;
    }
    m.zeroize_registers(&TMP);
    m.set_interrupts(true);
    Ok(())
}

/// Overwrites the key input buffer with zeros using clean registers.
fn scrub_key_input(m: &mut Machine) -> Result<(), MachineError> {
    let [addr, zero, _, _] = TMP;
    datapath::imm(m, addr, m.io().key_input as u64)?;
    datapath::imm(m, zero, 0)?;
    store(m, zero, addr, 0, Width::Qword)?;
    store(m, zero, addr, 8, Width::Qword)
}

/// Encrypts IN under the master key and stores the result at `dst`.
fn wrap_state_with_master(m: &mut Machine, dst: Addr) -> Result<(), KeyError> {
    load_master(m)?;
    let mut run = CipherRun::aes(RunKind::Wrap);
    encrypt_on_the_fly(m, &mut run)?;
    let token = run.finish()?;
    m.declassify(&IN, token);
    m.zeroize_registers(&[
        RK_HI, RK_LO, TMP[0], TMP[1], TMP[2], TMP[3], OUT[0], OUT[1], OUT[2], OUT[3],
    ]);
    m.mark(Marker::MasterReleased);
    store_block(m, dst)?;
    Ok(())
}

fn set_key_amnesia(m: &mut Machine, ctx: &AesContext) -> Result<(), KeyError> {
    let input = m.io().key_input;
    m.set_interrupts(false);
    m.mark(Marker::WindowOpen);
    datapath::imm(m, datapath::DISPATCH, SET_KEY_ENTRY)?;

    // first round key is the volume key itself
    load_block(m, input)?;
    wrap_state_with_master(m, ctx.wrapped_addr(WhichKey::First))?;

    // last round key: step ten times in registers
    datapath::imm(m, TMP[0], input as u64)?;
    load(m, RK_HI, TMP[0], 0, Width::Qword)?;
    load(m, RK_LO, TMP[0], 8, Width::Qword)?;
    for r in 1..=10 {
        step_key(m, r)?;
    }
    key_to_state(m)?;
    wrap_state_with_master(m, ctx.wrapped_addr(WhichKey::Last))?;

    scrub_key_input(m)?;
    m.zeroize_registers(&ENGINE_REGS);
    m.set_interrupts(true);
    m.mark(Marker::WindowClose);
    Ok(())
}

fn set_key_xornesia(m: &mut Machine, ctx: &AesContext) -> Result<(), KeyError> {
    let input = m.io().key_input;
    m.set_interrupts(false);
    m.mark(Marker::WindowOpen);
    datapath::imm(m, datapath::DISPATCH, SET_KEY_ENTRY)?;

    for which in [WhichKey::First, WhichKey::Last] {
        datapath::imm(m, TMP[0], input as u64)?;
        load(m, RK_HI, TMP[0], 0, Width::Qword)?;
        load(m, RK_LO, TMP[0], 8, Width::Qword)?;
        if which == WhichKey::Last {
            for r in 1..=10 {
                step_key(m, r)?;
            }
        }
        key_to_state(m)?;
        load_master(m)?;
        // IN ^= master words
        let run = CipherRun::xor_wrap();
        for (k, &s) in IN.iter().enumerate() {
            datapath::key_word(m, k, TMP[0])?;
            datapath::xor(m, s, s, TMP[0])?;
        }
        let token = run.finish()?;
        m.declassify(&IN, token);
        m.zeroize_registers(&[RK_HI, RK_LO, TMP[0]]);
        m.mark(Marker::MasterReleased);
        store_block(m, ctx.wrapped_addr(which))?;
    }

    scrub_key_input(m)?;
    m.zeroize_registers(&ENGINE_REGS);
    m.set_interrupts(true);
    m.mark(Marker::WindowClose);
    Ok(())
}

/// Stores the full encryption schedule and the nine transformed decryption
/// keys, the way a precomputing implementation does.
fn set_key_plain(m: &mut Machine, ctx: &AesContext) -> Result<(), KeyError> {
    let input = m.io().key_input;
    let base = ctx.base;
    let [addr, _, _, _] = TMP;
    datapath::imm(m, datapath::DISPATCH, SET_KEY_ENTRY)?;
    datapath::imm(m, addr, input as u64)?;
    load(m, RK_HI, addr, 0, Width::Qword)?;
    load(m, RK_LO, addr, 8, Width::Qword)?;
    for r in 0..=10u8 {
        if r > 0 {
            step_key(m, r)?;
        }
        datapath::imm(m, addr, (base + 16 * r as u32) as u64)?;
        store(m, RK_HI, addr, 0, Width::Qword)?;
        store(m, RK_LO, addr, 8, Width::Qword)?;
        if (1..10).contains(&r) {
            for (k, &o) in OUT.iter().enumerate() {
                datapath::inv_mix_key_word(m, k, o)?;
            }
            datapath::pack_words(m, OUT, IN[0], IN[1])?;
            datapath::imm(m, addr, (base + 176 + 16 * (r as u32 - 1)) as u64)?;
            store(m, IN[0], addr, 0, Width::Qword)?;
            store(m, IN[1], addr, 8, Width::Qword)?;
        }
    }
    scrub_key_input(m)?;
    m.zeroize_registers(&ENGINE_REGS);
    Ok(())
}

/// Brings the first or last round key of `ctx` into r9:r12, tainted.
/// Interrupts must already be disabled. Any master-key staging is zeroed
/// before returning; the master itself is overwritten by the round key.
pub fn unwrap_in_registers(
    m: &mut Machine,
    ctx: &AesContext,
    which: WhichKey,
) -> Result<(), KeyError> {
    if m.interrupts_enabled() {
        return Err(KeyError::InterruptsEnabled);
    }
    match ctx.variant {
        Variant::Plain => return Err(KeyError::NotWrapped(Variant::Plain)),
        Variant::Xornesia => {
            load_master(m)?;
            let [addr, hi, lo, _] = TMP;
            datapath::imm(m, addr, ctx.wrapped_addr(which) as u64)?;
            load(m, hi, addr, 0, Width::Qword)?;
            load(m, lo, addr, 8, Width::Qword)?;
            datapath::xor(m, RK_HI, RK_HI, hi)?;
            datapath::xor(m, RK_LO, RK_LO, lo)?;
        }
        Variant::Amnesia => {
            load_master(m)?;
            for r in 1..=10 {
                step_key(m, r)?;
            }
            load_block(m, ctx.wrapped_addr(which))?;
            let mut run = CipherRun::aes(RunKind::Unwrap);
            datapath::decrypt_on_the_fly(m, &mut run)?;
            state_to_key(m)?;
            m.zeroize_registers(&IN);
            m.zeroize_registers(&OUT);
        }
    }
    m.zeroize_registers(&TMP);
    m.mark(Marker::MasterReleased);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes;
    use crate::machine::MachineConfig;

    fn read_master(m: &mut Machine) -> [u8; 16] {
        use crate::machine::Privilege;
        let mut k = [0u8; 16];
        for slot in 0..4 {
            m.read_msr(slot, Reg::Rax, Privilege::Kernel).unwrap();
            k[4 * slot..4 * slot + 4].copy_from_slice(&(m.reg(Reg::Rax) as u32).to_be_bytes());
        }
        m.zeroize_registers(&[Reg::Rax]);
        k
    }

    use crate::machine::Reg;

    fn rk_regs(m: &Machine) -> [u8; 16] {
        let mut k = [0u8; 16];
        k[..8].copy_from_slice(&m.reg(RK_HI).to_be_bytes());
        k[8..].copy_from_slice(&m.reg(RK_LO).to_be_bytes());
        k
    }

    fn contains(hay: &[u8], needle: &[u8]) -> bool {
        hay.windows(needle.len()).any(|w| w == needle)
    }

    #[test]
    fn rng_is_deterministic_per_seed() {
        let mut a = Rng::from_u64(7);
        let mut b = Rng::from_u64(7);
        for _ in 0..10 {
            assert_eq!(a.next_block().unwrap(), b.next_block().unwrap());
        }
        assert_ne!(
            Rng::from_u64(8).next_block().unwrap(),
            Rng::from_u64(7).next_block().unwrap()
        );
    }

    #[test]
    fn rng_outputs_distinct() {
        let mut r = Rng::from_u64(1);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..10_000 {
            assert!(seen.insert(r.next_block().unwrap()));
        }
    }

    #[test]
    fn rng_state_moves_and_never_holds_output() {
        let mut r = Rng::from_u64(3);
        for _ in 0..100 {
            let before = r.state_fingerprint().unwrap();
            let out = r.next_block().unwrap();
            let after = r.state_fingerprint().unwrap();
            assert_ne!(before, after);
            assert!(!contains(&after, &out));
        }
        assert_eq!(r.counter(), 100);
    }

    #[test]
    fn unseeded_rng_errors() {
        assert_eq!(Rng::unseeded().next_block(), Err(KeyError::Unseeded));
    }

    #[test]
    fn master_key_reaches_msrs_but_not_ram() {
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        let mut km = KeyMaster::new(Rng::from_u64(11));
        let expected = Rng::from_u64(11).next_block().unwrap();
        km.generate_master_key(&mut m).unwrap();
        assert!(m.msr_bank().is_provisioned());
        assert_eq!(read_master(&mut m), expected);
        let img = m.snapshot_ram();
        assert!(!contains(img.bytes(), &expected));
        assert!(m.tainted_regs().is_empty());
        km.generate_master_key(&mut m).unwrap();
        assert_ne!(read_master(&mut m), expected);
    }

    #[test]
    fn amnesia_context_holds_only_wrapped_keys() {
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        let mut km = KeyMaster::new(Rng::from_u64(5));
        let vk = *b"volume key 16 by";
        let mut buf = vk;
        let ctx = km.set_key(&mut m, &mut buf, Variant::Amnesia).unwrap();
        assert_eq!(buf, [0; 16]);
        let master = read_master(&mut m);
        let ms = aes::expand(&master);
        let sched = aes::expand(&vk);
        let wf = ctx.wrapped(&m, WhichKey::First).unwrap();
        let wl = ctx.wrapped(&m, WhichKey::Last).unwrap();
        assert_eq!(wf, aes::encrypt_block(&ms, &aes::Block(vk)).0);
        assert_eq!(
            wl,
            aes::encrypt_block(&ms, &aes::Block(*sched.round_key(10).bytes())).0
        );
        let img = m.snapshot_ram();
        assert!(contains(img.bytes(), &wf));
        assert!(!contains(img.bytes(), &master));
        for rk in sched.round_keys() {
            assert!(!contains(img.bytes(), rk.bytes()));
        }
        assert!(m.violations().is_empty());
        assert!(ctx.plain_schedules(&m).is_none());
    }

    #[test]
    fn xornesia_wrap_is_xor_with_master() {
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        let mut km = KeyMaster::new(Rng::from_u64(6));
        let vk = [0x42u8; 16];
        let ctx = km
            .set_key(&mut m, &mut vk.clone(), Variant::Xornesia)
            .unwrap();
        let master = read_master(&mut m);
        let wf = ctx.wrapped(&m, WhichKey::First).unwrap();
        let x: Vec<u8> = wf.iter().zip(&master).map(|(a, b)| a ^ b).collect();
        assert_eq!(x, vk);
        let rk10 = *aes::expand(&vk).round_key(10).bytes();
        let wl = ctx.wrapped(&m, WhichKey::Last).unwrap();
        let x: Vec<u8> = wl.iter().zip(&master).map(|(a, b)| a ^ b).collect();
        assert_eq!(x, rk10);
    }

    #[test]
    fn plain_context_stores_twenty_quantities_with_violations() {
        let mut m = Machine::new(MachineConfig::audit()).unwrap();
        let mut km = KeyMaster::new(Rng::from_u64(9));
        let vk = [3u8; 16];
        let ctx = km.set_key(&mut m, &mut vk.clone(), Variant::Plain).unwrap();
        let stored = ctx.plain_schedules(&m).unwrap();
        assert_eq!(stored, aes::expand(&vk).stored_quantities());
        assert!(!m.violations().is_empty());
        assert!(!m.msr_bank().is_provisioned());
        assert_eq!(m.host_read(m.io().key_input, 16).unwrap(), &[0; 16]);
    }

    #[test]
    fn plain_needs_audit_mode() {
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        let mut km = KeyMaster::new(Rng::from_u64(9));
        let mut vk = [3u8; 16];
        assert_eq!(
            km.set_key(&mut m, &mut vk, Variant::Plain),
            Err(KeyError::NeedsAudit)
        );
        assert_eq!(vk, [0; 16]);
    }

    #[test]
    fn missing_master_without_generation() {
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        let mut km = KeyMaster::without_generation(Rng::from_u64(1));
        assert_eq!(
            km.set_key(&mut m, &mut [1; 16], Variant::Amnesia),
            Err(KeyError::MissingMaster)
        );
    }

    #[test]
    fn unwrap_requires_interrupts_off() {
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        let mut km = KeyMaster::new(Rng::from_u64(2));
        let ctx = km.set_key(&mut m, &mut [1; 16], Variant::Amnesia).unwrap();
        assert_eq!(
            unwrap_in_registers(&mut m, &ctx, WhichKey::First),
            Err(KeyError::InterruptsEnabled)
        );
    }

    #[test]
    fn unwrap_first_then_step_gives_last() {
        for variant in [Variant::Amnesia, Variant::Xornesia] {
            let mut m = Machine::new(MachineConfig::default()).unwrap();
            let mut km = KeyMaster::new(Rng::from_u64(4));
            let vk = *b"sixteen byte key";
            let ctx = km.set_key(&mut m, &mut vk.clone(), variant).unwrap();
            m.set_interrupts(false);
            unwrap_in_registers(&mut m, &ctx, WhichKey::First).unwrap();
            assert_eq!(rk_regs(&m), vk);
            assert!(m.is_tainted(RK_HI));
            for r in 1..=10 {
                step_key(&mut m, r).unwrap();
            }
            let stepped = rk_regs(&m);
            unwrap_in_registers(&mut m, &ctx, WhichKey::Last).unwrap();
            assert_eq!(rk_regs(&m), stepped);
            assert_eq!(&stepped, aes::expand(&vk).round_key(10).bytes());
            let tainted = m.tainted_regs();
            assert_eq!(tainted, vec![Reg::R9, Reg::R12], "{variant}");
            m.zeroize_registers(&ENGINE_REGS);
            m.set_interrupts(true);
            let img = m.snapshot_ram();
            for rk in aes::expand(&vk).round_keys() {
                assert!(!contains(img.bytes(), rk.bytes()));
            }
        }
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("amnesia".parse::<Variant>(), Ok(Variant::Amnesia));
        assert_eq!("aes".parse::<Variant>(), Ok(Variant::Plain));
        assert!("naked".parse::<Variant>().is_err());
    }
}
