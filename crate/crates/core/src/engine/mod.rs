//! Per-block cipher engines.
//!
//! Every engine exchanges blocks with the host through the machine's I/O
//! buffers and leaves the result in RAM only once it is a complete
//! ciphertext or plaintext. The amnesia and xornesia engines run the whole
//! key-bearing part of the operation with interrupts disabled:
//!
//! 1. disable interrupts
//! 2. read the master key from the MSRs
//! 3. unwrap the first (encrypt) or last (decrypt) round key into r9:r12
//! 4. load the input block and run ten rounds, deriving each round key from
//!    its neighbour in registers
//! 5. declassify the finished state, zero every other register
//! 6. re-enable interrupts and store the result
//!
//! If an interrupt handler scrubbed key registers mid-operation the whole
//! block is recomputed from step 1.

pub(crate) mod datapath;

use thiserror::Error;

use crate::aes::Block;
use crate::keymaster::{unwrap_in_registers, AesContext, KeyError, Variant, WhichKey};
use crate::machine::{Machine, MachineError, Marker, Reg, RunKind};
use datapath::{
    decrypt_from_ram, decrypt_on_the_fly, encrypt_from_ram, encrypt_on_the_fly, load_block,
    store_block, CipherRun, DECRYPT_ENTRY, DISPATCH, ENCRYPT_ENTRY, ENGINE_REGS, IN,
};

/// Attempts per block before giving up on a machine whose handler keeps
/// scrubbing registers.
pub const MAX_ATTEMPTS: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error("context is {actual}, engine expects {expected}")]
    WrongVariant { expected: Variant, actual: Variant },
    #[error("gave up after {0} interrupted attempts")]
    Interrupted(u32),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Encrypt,
    Decrypt,
}

/// Encrypts one block with whichever engine matches the context variant.
pub fn encrypt(m: &mut Machine, ctx: &AesContext, block: &Block) -> Result<Block, EngineError> {
    run(m, ctx, block, Direction::Encrypt)
}

pub fn decrypt(m: &mut Machine, ctx: &AesContext, block: &Block) -> Result<Block, EngineError> {
    run(m, ctx, block, Direction::Decrypt)
}

fn expect(ctx: &AesContext, expected: Variant) -> Result<(), EngineError> {
    if ctx.variant() != expected {
        return Err(EngineError::WrongVariant {
            expected,
            actual: ctx.variant(),
        });
    }
    Ok(())
}

pub fn amnesia_encrypt(
    m: &mut Machine,
    ctx: &AesContext,
    block: &Block,
) -> Result<Block, EngineError> {
    expect(ctx, Variant::Amnesia)?;
    encrypt(m, ctx, block)
}

pub fn amnesia_decrypt(
    m: &mut Machine,
    ctx: &AesContext,
    block: &Block,
) -> Result<Block, EngineError> {
    expect(ctx, Variant::Amnesia)?;
    decrypt(m, ctx, block)
}

pub fn xornesia_encrypt(
    m: &mut Machine,
    ctx: &AesContext,
    block: &Block,
) -> Result<Block, EngineError> {
    expect(ctx, Variant::Xornesia)?;
    encrypt(m, ctx, block)
}

pub fn xornesia_decrypt(
    m: &mut Machine,
    ctx: &AesContext,
    block: &Block,
) -> Result<Block, EngineError> {
    expect(ctx, Variant::Xornesia)?;
    decrypt(m, ctx, block)
}

pub fn plain_encrypt(
    m: &mut Machine,
    ctx: &AesContext,
    block: &Block,
) -> Result<Block, EngineError> {
    expect(ctx, Variant::Plain)?;
    encrypt(m, ctx, block)
}

pub fn plain_decrypt(
    m: &mut Machine,
    ctx: &AesContext,
    block: &Block,
) -> Result<Block, EngineError> {
    expect(ctx, Variant::Plain)?;
    decrypt(m, ctx, block)
}

/// Instructions executed since the machine's counters were last reset.
pub fn instruction_count(m: &Machine) -> u64 {
    m.instruction_count()
}

fn run(
    m: &mut Machine,
    ctx: &AesContext,
    block: &Block,
    dir: Direction,
) -> Result<Block, EngineError> {
    let io = m.io();
    m.host_write(io.block_in, &block.0)?;
    let result = match ctx.variant() {
        Variant::Plain => plain_block(m, ctx, dir),
        _ => secure_block(m, ctx, dir),
    };
    if let Err(e) = result {
        m.zeroize_registers(&ENGINE_REGS);
        m.set_interrupts(true);
        return Err(e);
    }
    let out = m.host_read(io.block_out, 16)?;
    Ok(Block(out.try_into().expect("16 bytes")))
}

fn plain_block(m: &mut Machine, ctx: &AesContext, dir: Direction) -> Result<(), EngineError> {
    let io = m.io();
    datapath::imm(m, DISPATCH, entry(dir))?;
    load_block(m, io.block_in)?;
    let mut run = CipherRun::aes(RunKind::Payload);
    match dir {
        Direction::Encrypt => encrypt_from_ram(m, ctx.addr(), &mut run)?,
        Direction::Decrypt => decrypt_from_ram(m, ctx.addr(), &mut run)?,
    }
    store_block(m, io.block_out)?;
    m.zeroize_registers(&ENGINE_REGS);
    Ok(())
}

fn entry(dir: Direction) -> u64 {
    match dir {
        Direction::Encrypt => ENCRYPT_ENTRY,
        Direction::Decrypt => DECRYPT_ENTRY,
    }
}

fn secure_block(m: &mut Machine, ctx: &AesContext, dir: Direction) -> Result<(), EngineError> {
    let io = m.io();
    m.take_scrubbed();
    for attempt in 0..MAX_ATTEMPTS {
        if attempt > 0 {
            m.mark(Marker::Retry);
        }
        m.set_interrupts(false);
        m.mark(Marker::WindowOpen);
        datapath::imm(m, DISPATCH, entry(dir))?;
        let which = match dir {
            Direction::Encrypt => WhichKey::First,
            Direction::Decrypt => WhichKey::Last,
        };
        unwrap_in_registers(m, ctx, which)?;
        load_block(m, io.block_in)?;
        let mut run = CipherRun::aes(RunKind::Payload);
        match dir {
            Direction::Encrypt => encrypt_on_the_fly(m, &mut run)?,
            Direction::Decrypt => decrypt_on_the_fly(m, &mut run)?,
        }
        let token = run.finish().map_err(KeyError::from)?;
        m.declassify(&IN, token);
        m.zeroize_registers(&NON_OUTPUT);
        m.set_interrupts(true);
        m.mark(Marker::WindowClose);
        if m.take_scrubbed() {
            m.zeroize_registers(&IN);
            continue;
        }
        store_block(m, io.block_out)?;
        m.zeroize_registers(&IN);
        return Ok(());
    }
    Err(EngineError::Interrupted(MAX_ATTEMPTS))
}

/// Everything except the four output registers.
const NON_OUTPUT: [Reg; 11] = [
    Reg::Rbx,
    Reg::Rdx,
    Reg::R14,
    Reg::R15,
    Reg::R8,
    Reg::R13,
    Reg::Rdi,
    Reg::Rsi,
    Reg::R9,
    Reg::R12,
    Reg::Rbp,
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes;
    use crate::keymaster::{KeyMaster, Rng};
    use crate::machine::{Instr, MachineConfig, TraceEvent};

    fn setup(variant: Variant, key: [u8; 16]) -> (Machine, AesContext) {
        let cfg = if variant == Variant::Plain {
            MachineConfig::audit()
        } else {
            MachineConfig::default()
        };
        let mut m = Machine::new(cfg).unwrap();
        let mut km = KeyMaster::new(Rng::from_u64(99));
        let ctx = km.set_key(&mut m, &mut key.clone(), variant).unwrap();
        (m, ctx)
    }

    fn fips() -> ([u8; 16], Block, Block) {
        let k = hex::decode("000102030405060708090a0b0c0d0e0f")
            .unwrap()
            .try_into()
            .unwrap();
        let p = hex::decode("00112233445566778899aabbccddeeff").unwrap();
        let c = hex::decode("69c4e0d86a7b0430d8cdb78070b4c55a").unwrap();
        (
            k,
            Block::try_from(&p[..]).unwrap(),
            Block::try_from(&c[..]).unwrap(),
        )
    }

    #[test]
    fn every_engine_reproduces_the_known_answer() {
        let (k, p, c) = fips();
        for v in Variant::ALL {
            let (mut m, ctx) = setup(v, k);
            assert_eq!(encrypt(&mut m, &ctx, &p).unwrap(), c, "{v}");
            assert_eq!(decrypt(&mut m, &ctx, &c).unwrap(), p, "{v}");
        }
    }

    #[test]
    fn engines_match_reference_on_random_blocks() {
        use rand::{Rng as _, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let key: [u8; 16] = rng.gen();
            let sched = aes::expand(&key);
            for v in Variant::ALL {
                let (mut m, ctx) = setup(v, key);
                for _ in 0..5 {
                    let p = Block(rng.gen());
                    let c = encrypt(&mut m, &ctx, &p).unwrap();
                    assert_eq!(c, aes::encrypt_block(&sched, &p));
                    assert_eq!(decrypt(&mut m, &ctx, &c).unwrap(), p);
                }
            }
        }
    }

    #[test]
    fn variant_specific_entry_points_check_context() {
        let (mut m, ctx) = setup(Variant::Xornesia, [1; 16]);
        let e = amnesia_encrypt(&mut m, &ctx, &Block([0; 16])).unwrap_err();
        assert_eq!(
            e,
            EngineError::WrongVariant {
                expected: Variant::Amnesia,
                actual: Variant::Xornesia
            }
        );
        assert!(xornesia_encrypt(&mut m, &ctx, &Block([0; 16])).is_ok());
    }

    #[test]
    fn round_counts_per_block() {
        for (v, per_op) in [
            (Variant::Amnesia, 20),
            (Variant::Xornesia, 10),
            (Variant::Plain, 10),
        ] {
            let (mut m, ctx) = setup(v, [9; 16]);
            m.reset_counters();
            encrypt(&mut m, &ctx, &Block([0; 16])).unwrap();
            assert_eq!(m.round_count(), per_op, "{v} encrypt");
            decrypt(&mut m, &ctx, &Block([0; 16])).unwrap();
            assert_eq!(m.round_count(), 2 * per_op, "{v} decrypt");
        }
    }

    #[test]
    fn instruction_counter_resets_and_grows() {
        let (mut m, ctx) = setup(Variant::Amnesia, [9; 16]);
        m.reset_counters();
        assert_eq!(instruction_count(&m), 0);
        encrypt(&mut m, &ctx, &Block([0; 16])).unwrap();
        let a = instruction_count(&m);
        assert!(a > 0);
        encrypt(&mut m, &ctx, &Block([0; 16])).unwrap();
        assert_eq!(instruction_count(&m), 2 * a);
    }

    #[test]
    fn instruction_ordering_between_engines() {
        let mut counts = Vec::new();
        for v in Variant::ALL {
            let (mut m, ctx) = setup(v, [9; 16]);
            m.reset_counters();
            let c = encrypt(&mut m, &ctx, &Block([0; 16])).unwrap();
            decrypt(&mut m, &ctx, &c).unwrap();
            counts.push(m.instruction_count());
        }
        assert!(counts[0] > counts[1] && counts[1] > counts[2], "{counts:?}");
    }

    #[test]
    fn no_store_between_first_and_ninth_payload_round() {
        for v in [Variant::Amnesia, Variant::Xornesia] {
            let (mut m, ctx) = setup(v, [9; 16]);
            m.enable_trace();
            encrypt(&mut m, &ctx, &Block([1; 16])).unwrap();
            let trace = m.take_trace();
            let pos = |round| {
                trace
                    .iter()
                    .position(|e| {
                        *e == TraceEvent::Marker(Marker::RoundDone {
                            run: RunKind::Payload,
                            round,
                        })
                    })
                    .unwrap()
            };
            let stores = trace[pos(1)..pos(9)]
                .iter()
                .filter(|e| matches!(e, TraceEvent::Exec(Instr::Store { .. })))
                .count();
            assert_eq!(stores, 0, "{v}");
        }
    }

    #[test]
    fn secure_engines_leave_no_tainted_registers() {
        for v in [Variant::Amnesia, Variant::Xornesia] {
            let (mut m, ctx) = setup(v, [5; 16]);
            encrypt(&mut m, &ctx, &Block([1; 16])).unwrap();
            assert!(m.tainted_regs().is_empty());
            assert!(m.interrupts_enabled());
            assert!(m.violations().is_empty());
        }
    }

    #[test]
    fn scrubbed_nmi_forces_a_clean_retry() {
        let (k, p, c) = fips();
        let (mut m, ctx) = setup(Variant::Amnesia, k);
        m.set_nmi_scrub(true);
        m.enable_trace();
        m.schedule_nmi(m.instruction_count() + 200);
        assert_eq!(encrypt(&mut m, &ctx, &p).unwrap(), c);
        assert!(m.violations().is_empty());
        assert!(m.take_trace().contains(&TraceEvent::Marker(Marker::Retry)));
    }

    #[test]
    fn unscrubbed_nmi_leaks_key_registers() {
        let (k, p, _) = fips();
        let (mut m, ctx) = setup(Variant::Amnesia, k);
        m.schedule_nmi(m.instruction_count() + 200);
        encrypt(&mut m, &ctx, &p).unwrap();
        assert!(!m.violations().is_empty());
    }
}
