//! Register-resident AES-128 rounds and key-schedule steps, emitted as
//! machine instructions.
//!
//! Register roles:
//!
//! | role                      | registers              |
//! |---------------------------|------------------------|
//! | cipher state in           | rax, rcx, r10, r11     |
//! | cipher state out          | rbx, rdx, r14, r15     |
//! | round temporaries         | r8, r13, rdi, rsi      |
//! | current round key         | r9 (w0:w1), r12 (w2:w3)|
//! | routine dispatch          | rbp                    |
//!
//! rsp is never touched. Each state register holds one 32-bit column word in
//! its low half.

use crate::aes::tables::RCON;
use crate::machine::{
    Addr, AluOp, DeclassifyToken, Instr, Machine, MachineError, Marker, Operand, Reg, RunKind,
    Table, TableFamily, Width,
};

pub(crate) const IN: [Reg; 4] = [Reg::Rax, Reg::Rcx, Reg::R10, Reg::R11];
pub(crate) const OUT: [Reg; 4] = [Reg::Rbx, Reg::Rdx, Reg::R14, Reg::R15];
pub(crate) const TMP: [Reg; 4] = [Reg::R8, Reg::R13, Reg::Rdi, Reg::Rsi];
pub(crate) const RK_HI: Reg = Reg::R9;
pub(crate) const RK_LO: Reg = Reg::R12;
pub(crate) const DISPATCH: Reg = Reg::Rbp;

/// Every register the engines may write.
pub(crate) const ENGINE_REGS: [Reg; 15] = [
    Reg::Rax,
    Reg::Rcx,
    Reg::R10,
    Reg::R11,
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

pub(crate) const ENCRYPT_ENTRY: u64 = 0xe;
pub(crate) const DECRYPT_ENTRY: u64 = 0xd;
pub(crate) const SET_KEY_ENTRY: u64 = 0x5;

const LOW32: u64 = 0xffff_ffff;

type Step = Result<(), MachineError>;

#[inline(always)]
pub(crate) fn imm(m: &mut Machine, dst: Reg, imm: u64) -> Step {
    m.exec(Instr::LoadImm { dst, imm })
}

#[inline(always)]
pub(crate) fn mov(m: &mut Machine, dst: Reg, src: Reg) -> Step {
    m.exec(Instr::Mov { dst, src })
}

#[inline(always)]
fn alu(m: &mut Machine, op: AluOp, dst: Reg, lhs: Reg, rhs: Operand) -> Step {
    m.exec(Instr::Alu { op, dst, lhs, rhs })
}

#[inline(always)]
pub(crate) fn xor(m: &mut Machine, dst: Reg, lhs: Reg, rhs: Reg) -> Step {
    alu(m, AluOp::Xor, dst, lhs, Operand::Reg(rhs))
}

#[inline(always)]
fn or(m: &mut Machine, dst: Reg, lhs: Reg, rhs: Reg) -> Step {
    alu(m, AluOp::Or, dst, lhs, Operand::Reg(rhs))
}

#[inline(always)]
fn xor_imm(m: &mut Machine, dst: Reg, lhs: Reg, v: u64) -> Step {
    alu(m, AluOp::Xor, dst, lhs, Operand::Imm(v))
}

#[inline(always)]
fn and_imm(m: &mut Machine, dst: Reg, lhs: Reg, v: u64) -> Step {
    alu(m, AluOp::And, dst, lhs, Operand::Imm(v))
}

#[inline(always)]
fn shr(m: &mut Machine, dst: Reg, lhs: Reg, n: u64) -> Step {
    alu(m, AluOp::Shr, dst, lhs, Operand::Imm(n))
}

#[inline(always)]
fn shl(m: &mut Machine, dst: Reg, lhs: Reg, n: u64) -> Step {
    alu(m, AluOp::Shl, dst, lhs, Operand::Imm(n))
}

#[inline(always)]
fn lut(m: &mut Machine, dst: Reg, family: TableFamily, row: u8, index: Reg) -> Step {
    m.exec(Instr::Lookup {
        dst,
        table: Table::new(family, row),
        index,
    })
}

#[inline(always)]
pub(crate) fn load(m: &mut Machine, dst: Reg, base: Reg, offset: u32, width: Width) -> Step {
    m.exec(Instr::Load {
        dst,
        base,
        offset,
        width,
    })
}

#[inline(always)]
pub(crate) fn store(m: &mut Machine, src: Reg, base: Reg, offset: u32, width: Width) -> Step {
    m.exec(Instr::Store {
        src,
        base,
        offset,
        width,
    })
}

/// Counts the rounds of one cipher run and gates declassification of its
/// result on the run having finished.
#[derive(Debug)]
pub(crate) struct CipherRun {
    kind: RunKind,
    required: u8,
    done: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct IncompleteRun {
    pub done: u8,
    pub required: u8,
}

impl CipherRun {
    pub(crate) fn aes(kind: RunKind) -> Self {
        CipherRun {
            kind,
            required: 10,
            done: 0,
        }
    }

    /// A XOR wrap has no rounds; its single XOR is the whole operation.
    pub(crate) fn xor_wrap() -> Self {
        CipherRun {
            kind: RunKind::Wrap,
            required: 0,
            done: 0,
        }
    }

    fn round(&mut self, m: &mut Machine) {
        self.done += 1;
        m.note_round();
        m.mark(Marker::RoundDone {
            run: self.kind,
            round: self.done,
        });
    }

    #[cfg(test)]
    pub(crate) fn rounds_done(&self) -> u8 {
        self.done
    }

    pub(crate) fn finish(self) -> Result<DeclassifyToken, IncompleteRun> {
        if self.done != self.required {
            return Err(IncompleteRun {
                done: self.done,
                required: self.required,
            });
        }
        Ok(DeclassifyToken::mint())
    }
}

/// Copies round-key word `k` into the low half of `dst`.
#[inline(always)]
pub(crate) fn key_word(m: &mut Machine, k: usize, dst: Reg) -> Step {
    match k {
        0 => shr(m, dst, RK_HI, 32),
        1 => and_imm(m, dst, RK_HI, LOW32),
        2 => shr(m, dst, RK_LO, 32),
        _ => and_imm(m, dst, RK_LO, LOW32),
    }
}

pub(crate) fn add_round_key(m: &mut Machine, state: &[Reg; 4]) -> Step {
    for (k, &s) in state.iter().enumerate() {
        key_word(m, k, TMP[0])?;
        xor(m, s, s, TMP[0])?;
    }
    Ok(())
}

/// SubWord(RotWord(w3)) ^ rcon into TMP[0]. Clobbers TMP[0..3].
fn schedule_core(m: &mut Machine, rcon: u8) -> Step {
    let [t0, t1, w3, _] = TMP;
    and_imm(m, w3, RK_LO, LOW32)?;
    shr(m, t0, w3, 16)?;
    lut(m, t0, TableFamily::Sub, 0, t0)?;
    shr(m, t1, w3, 8)?;
    lut(m, t1, TableFamily::Sub, 1, t1)?;
    xor(m, t0, t0, t1)?;
    lut(m, t1, TableFamily::Sub, 2, w3)?;
    xor(m, t0, t0, t1)?;
    shr(m, t1, w3, 24)?;
    lut(m, t1, TableFamily::Sub, 3, t1)?;
    xor(m, t0, t0, t1)?;
    xor_imm(m, t0, t0, (rcon as u64) << 24)
}

/// Replaces the round key in r9:r12 with round key `next`.
pub(crate) fn step_key(m: &mut Machine, next: u8) -> Step {
    let [t0, t1, _, _] = TMP;
    schedule_core(m, RCON[next as usize])?;
    shl(m, t1, t0, 32)?;
    xor(m, RK_HI, RK_HI, t1)?; // w0'
    shr(m, t1, RK_HI, 32)?;
    xor(m, RK_HI, RK_HI, t1)?; // w1' = w1 ^ w0'
    and_imm(m, t1, RK_HI, LOW32)?;
    shl(m, t1, t1, 32)?;
    xor(m, RK_LO, RK_LO, t1)?; // w2' = w2 ^ w1'
    shr(m, t1, RK_LO, 32)?;
    xor(m, RK_LO, RK_LO, t1) // w3' = w3 ^ w2'
}

/// Replaces round key `cur` in r9:r12 with round key `cur - 1`.
pub(crate) fn unstep_key(m: &mut Machine, cur: u8) -> Step {
    let [t0, t1, _, _] = TMP;
    shr(m, t1, RK_LO, 32)?;
    xor(m, RK_LO, RK_LO, t1)?; // w3
    and_imm(m, t1, RK_HI, LOW32)?;
    shl(m, t1, t1, 32)?;
    xor(m, RK_LO, RK_LO, t1)?; // w2
    shr(m, t1, RK_HI, 32)?;
    xor(m, RK_HI, RK_HI, t1)?; // w1
    schedule_core(m, RCON[cur as usize])?;
    shl(m, t1, t0, 32)?;
    xor(m, RK_HI, RK_HI, t1) // w0
}

/// One forward round from IN into OUT, then OUT moved back to IN.
fn encrypt_round(m: &mut Machine, last: bool) -> Step {
    let [t0, t1, _, _] = TMP;
    let fam = if last {
        TableFamily::Sub
    } else {
        TableFamily::Te
    };
    for c in 0..4 {
        let out = OUT[c];
        shr(m, t0, IN[c], 24)?;
        lut(m, t0, fam, 0, t0)?;
        shr(m, t1, IN[(c + 1) & 3], 16)?;
        lut(m, t1, fam, 1, t1)?;
        xor(m, out, t0, t1)?;
        shr(m, t0, IN[(c + 2) & 3], 8)?;
        lut(m, t0, fam, 2, t0)?;
        xor(m, out, out, t0)?;
        lut(m, t0, fam, 3, IN[(c + 3) & 3])?;
        xor(m, out, out, t0)?;
        key_word(m, c, t0)?;
        xor(m, out, out, t0)?;
    }
    for c in 0..4 {
        mov(m, IN[c], OUT[c])?;
    }
    Ok(())
}

/// One inverse round. With `transform_key` the current round key is passed
/// through InvMixColumns on the way in, as the equivalent inverse cipher
/// requires for rounds 1..=9; the plain engine stores those keys already
/// transformed.
fn decrypt_round(m: &mut Machine, last: bool, transform_key: bool) -> Step {
    let [t0, t1, kw, kt] = TMP;
    let fam = if last {
        TableFamily::InvSub
    } else {
        TableFamily::Td
    };
    for c in 0..4 {
        let out = OUT[c];
        shr(m, t0, IN[c], 24)?;
        lut(m, t0, fam, 0, t0)?;
        shr(m, t1, IN[(c + 3) & 3], 16)?;
        lut(m, t1, fam, 1, t1)?;
        xor(m, out, t0, t1)?;
        shr(m, t0, IN[(c + 2) & 3], 8)?;
        lut(m, t0, fam, 2, t0)?;
        xor(m, out, out, t0)?;
        lut(m, t0, fam, 3, IN[(c + 1) & 3])?;
        xor(m, out, out, t0)?;
        if transform_key {
            key_word(m, c, kw)?;
            shr(m, kt, kw, 24)?;
            lut(m, kt, TableFamily::Imc, 0, kt)?;
            xor(m, out, out, kt)?;
            shr(m, kt, kw, 16)?;
            lut(m, kt, TableFamily::Imc, 1, kt)?;
            xor(m, out, out, kt)?;
            shr(m, kt, kw, 8)?;
            lut(m, kt, TableFamily::Imc, 2, kt)?;
            xor(m, out, out, kt)?;
            lut(m, kt, TableFamily::Imc, 3, kw)?;
            xor(m, out, out, kt)?;
        } else {
            key_word(m, c, t0)?;
            xor(m, out, out, t0)?;
        }
    }
    for c in 0..4 {
        mov(m, IN[c], OUT[c])?;
    }
    Ok(())
}

/// Encrypts IN in place, starting from round key 0 in r9:r12 and stepping
/// the key forward between rounds.
pub(crate) fn encrypt_on_the_fly(m: &mut Machine, run: &mut CipherRun) -> Step {
    add_round_key(m, &IN)?;
    for r in 1..=10u8 {
        step_key(m, r)?;
        encrypt_round(m, r == 10)?;
        run.round(m);
    }
    Ok(())
}

/// Decrypts IN in place, starting from round key 10 in r9:r12 and stepping
/// the key backward between rounds.
pub(crate) fn decrypt_on_the_fly(m: &mut Machine, run: &mut CipherRun) -> Step {
    add_round_key(m, &IN)?;
    for r in (0..10u8).rev() {
        unstep_key(m, r + 1)?;
        decrypt_round(m, r == 0, r != 0)?;
        run.round(m);
    }
    Ok(())
}

/// Loads a 16-byte round key from RAM into r9:r12.
fn load_round_key(m: &mut Machine, addr: Addr) -> Step {
    imm(m, TMP[0], addr as u64)?;
    load(m, RK_HI, TMP[0], 0, Width::Qword)?;
    load(m, RK_LO, TMP[0], 8, Width::Qword)
}

/// Encrypts IN in place using the precomputed schedule at `sched`.
pub(crate) fn encrypt_from_ram(m: &mut Machine, sched: Addr, run: &mut CipherRun) -> Step {
    load_round_key(m, sched)?;
    add_round_key(m, &IN)?;
    for r in 1..=10u32 {
        load_round_key(m, sched + 16 * r)?;
        encrypt_round(m, r == 10)?;
        run.round(m);
    }
    Ok(())
}

/// Decrypts IN in place using the precomputed schedule at `sched`, whose
/// transformed middle keys start at `sched + 176`.
pub(crate) fn decrypt_from_ram(m: &mut Machine, sched: Addr, run: &mut CipherRun) -> Step {
    load_round_key(m, sched + 160)?;
    add_round_key(m, &IN)?;
    for r in (0..10u32).rev() {
        let at = if r == 0 {
            sched
        } else {
            sched + 176 + 16 * (r - 1)
        };
        load_round_key(m, at)?;
        decrypt_round(m, r == 0, false)?;
        run.round(m);
    }
    Ok(())
}

/// Reads the master key from the four MSRs into r9:r12. Staging
/// registers are zeroed again before returning.
pub(crate) fn load_master(m: &mut Machine) -> Step {
    let [t0, t1, t2, t3] = TMP;
    let k = crate::machine::Privilege::Kernel;
    m.read_msr(0, t0, k)?;
    m.read_msr(1, t1, k)?;
    m.read_msr(2, t2, k)?;
    m.read_msr(3, t3, k)?;
    shl(m, RK_HI, t0, 32)?;
    or(m, RK_HI, RK_HI, t1)?;
    shl(m, RK_LO, t2, 32)?;
    or(m, RK_LO, RK_LO, t3)?;
    m.zeroize_registers(&TMP);
    m.mark(Marker::MasterLoaded);
    Ok(())
}

/// Loads four column words from RAM into IN.
pub(crate) fn load_block(m: &mut Machine, addr: Addr) -> Step {
    imm(m, TMP[0], addr as u64)?;
    for (c, &r) in IN.iter().enumerate() {
        load(m, r, TMP[0], 4 * c as u32, Width::Dword)?;
    }
    Ok(())
}

/// Stores IN to RAM as a 16-byte block.
pub(crate) fn store_block(m: &mut Machine, addr: Addr) -> Step {
    imm(m, TMP[0], addr as u64)?;
    for (c, &r) in IN.iter().enumerate() {
        store(m, r, TMP[0], 4 * c as u32, Width::Dword)?;
    }
    Ok(())
}

/// Packs the IN words into r9:r12, making the state the current round key.
pub(crate) fn state_to_key(m: &mut Machine) -> Step {
    shl(m, RK_HI, IN[0], 32)?;
    or(m, RK_HI, RK_HI, IN[1])?;
    shl(m, RK_LO, IN[2], 32)?;
    or(m, RK_LO, RK_LO, IN[3])
}

/// Unpacks r9:r12 into the IN words.
pub(crate) fn key_to_state(m: &mut Machine) -> Step {
    for (k, &r) in IN.iter().enumerate() {
        key_word(m, k, r)?;
    }
    Ok(())
}

/// Computes InvMixColumns of round-key word `k` into `dst`. Clobbers
/// TMP[2..4].
pub(crate) fn inv_mix_key_word(m: &mut Machine, k: usize, dst: Reg) -> Step {
    let [_, _, kw, kt] = TMP;
    key_word(m, k, kw)?;
    shr(m, dst, kw, 24)?;
    lut(m, dst, TableFamily::Imc, 0, dst)?;
    shr(m, kt, kw, 16)?;
    lut(m, kt, TableFamily::Imc, 1, kt)?;
    xor(m, dst, dst, kt)?;
    shr(m, kt, kw, 8)?;
    lut(m, kt, TableFamily::Imc, 2, kt)?;
    xor(m, dst, dst, kt)?;
    lut(m, kt, TableFamily::Imc, 3, kw)?;
    xor(m, dst, dst, kt)
}

/// Packs four 32-bit words held in `words` into two 64-bit halves in
/// `hi` and `lo`.
pub(crate) fn pack_words(m: &mut Machine, words: [Reg; 4], hi: Reg, lo: Reg) -> Step {
    shl(m, hi, words[0], 32)?;
    or(m, hi, hi, words[1])?;
    shl(m, lo, words[2], 32)?;
    or(m, lo, lo, words[3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::{self, Block};
    use crate::machine::MachineConfig;

    fn key_into_regs(m: &mut Machine, key: &[u8; 16]) {
        m.load_secret(RK_HI, u64::from_be_bytes(key[..8].try_into().unwrap()))
            .unwrap();
        m.load_secret(RK_LO, u64::from_be_bytes(key[8..].try_into().unwrap()))
            .unwrap();
    }

    fn key_from_regs(m: &Machine) -> [u8; 16] {
        let mut k = [0u8; 16];
        k[..8].copy_from_slice(&m.reg(RK_HI).to_be_bytes());
        k[8..].copy_from_slice(&m.reg(RK_LO).to_be_bytes());
        k
    }

    fn block_into_state(m: &mut Machine, b: &[u8; 16]) {
        for (c, &r) in IN.iter().enumerate() {
            let w = u32::from_be_bytes(b[4 * c..4 * c + 4].try_into().unwrap());
            imm(m, r, w as u64).unwrap();
        }
    }

    fn state_bytes(m: &Machine) -> [u8; 16] {
        let mut b = [0u8; 16];
        for (c, &r) in IN.iter().enumerate() {
            b[4 * c..4 * c + 4].copy_from_slice(&(m.reg(r) as u32).to_be_bytes());
        }
        b
    }

    #[test]
    fn register_step_matches_reference_schedule() {
        let key: [u8; 16] = *b"0123456789abcdef";
        let sched = aes::expand(&key);
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        key_into_regs(&mut m, &key);
        for r in 1..=10u8 {
            step_key(&mut m, r).unwrap();
            assert_eq!(
                &key_from_regs(&m),
                sched.round_key(r as usize).bytes(),
                "round {r}"
            );
        }
        for r in (0..10u8).rev() {
            unstep_key(&mut m, r + 1).unwrap();
            assert_eq!(
                &key_from_regs(&m),
                sched.round_key(r as usize).bytes(),
                "round {r}"
            );
        }
        assert!(m.is_tainted(RK_HI) && m.is_tainted(RK_LO));
    }

    #[test]
    fn register_rounds_match_reference_cipher() {
        let key: [u8; 16] = hex::decode("000102030405060708090a0b0c0d0e0f")
            .unwrap()
            .try_into()
            .unwrap();
        let pt: [u8; 16] = hex::decode("00112233445566778899aabbccddeeff")
            .unwrap()
            .try_into()
            .unwrap();
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        key_into_regs(&mut m, &key);
        block_into_state(&mut m, &pt);
        let mut run = CipherRun::aes(RunKind::Payload);
        encrypt_on_the_fly(&mut m, &mut run).unwrap();
        let ct = state_bytes(&m);
        assert_eq!(hex::encode(ct), "69c4e0d86a7b0430d8cdb78070b4c55a");
        assert!(IN.iter().all(|&r| m.is_tainted(r)));
        let mut run = CipherRun::aes(RunKind::Payload);
        decrypt_on_the_fly(&mut m, &mut run).unwrap();
        assert_eq!(state_bytes(&m), pt);
        assert_eq!(key_from_regs(&m), key);
        let sched = aes::expand(&key);
        assert_eq!(aes::encrypt_block(&sched, &Block(pt)).0, ct);
    }

    #[test]
    fn inverse_key_word_matches_reference() {
        let key = [0x5au8; 16];
        let sched = aes::expand(&key);
        let dk = sched.inverse_middle_keys();
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        key_into_regs(&mut m, sched.round_key(3).bytes());
        for (k, &r) in OUT.iter().enumerate() {
            inv_mix_key_word(&mut m, k, r).unwrap();
        }
        let mut got = [0u8; 16];
        for k in 0..4 {
            got[4 * k..4 * k + 4].copy_from_slice(&(m.reg(OUT[k]) as u32).to_be_bytes());
        }
        assert_eq!(got, dk[2]);
    }

    #[test]
    fn partial_run_cannot_mint_token() {
        let mut m = Machine::new(MachineConfig::default()).unwrap();
        let mut run = CipherRun::aes(RunKind::Payload);
        for _ in 0..5 {
            run.round(&mut m);
        }
        assert_eq!(run.rounds_done(), 5);
        assert_eq!(
            run.finish().unwrap_err(),
            IncompleteRun {
                done: 5,
                required: 10
            }
        );
    }

    #[test]
    fn engine_never_names_the_stack_pointer() {
        assert!(!ENGINE_REGS.contains(&Reg::Rsp));
        let mut all: Vec<Reg> = ENGINE_REGS.to_vec();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 15);
    }
}
