//! Reference AES-128.
//!
//! This is the byte-oriented textbook cipher. It is the functional oracle for
//! the register-machine engines, which compute the same permutation with
//! word tables and an on-the-fly key schedule.
//!
//! Decryption uses the equivalent inverse cipher: the middle round keys are
//! passed through InvMixColumns so every decryption round has the same
//! shape as an encryption round.

pub mod tables;

use std::fmt;

use thiserror::Error;

use tables::{gmul, INV_SBOX, RCON, SBOX};

pub const BLOCK_LEN: usize = 16;
pub const KEY_LEN: usize = 16;
pub const ROUNDS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AesError {
    #[error("expected {expected} bytes, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("round key {0} has no successor")]
    StepPastLast(u8),
    #[error("round key 0 has no predecessor")]
    UnstepBeforeFirst,
    #[error("round index {0} out of range")]
    BadRound(u8),
}

/// One 16-byte cipher block.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Block(pub [u8; BLOCK_LEN]);

impl Block {
    pub fn as_bytes(&self) -> &[u8; BLOCK_LEN] {
        &self.0
    }
}

impl TryFrom<&[u8]> for Block {
    type Error = AesError;

    fn try_from(bytes: &[u8]) -> Result<Self, AesError> {
        let arr: [u8; BLOCK_LEN] = bytes.try_into().map_err(|_| AesError::Length {
            expected: BLOCK_LEN,
            actual: bytes.len(),
        })?;
        Ok(Block(arr))
    }
}

impl From<[u8; BLOCK_LEN]> for Block {
    fn from(b: [u8; BLOCK_LEN]) -> Self {
        Block(b)
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Block({})", hex::encode(self.0))
    }
}

/// A round key tagged with its position in the schedule.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoundKey {
    bytes: [u8; 16],
    round: u8,
}

impl fmt::Debug for RoundKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RoundKey[{}]({})", self.round, hex::encode(self.bytes))
    }
}

impl RoundKey {
    pub fn new(bytes: [u8; 16], round: u8) -> Result<Self, AesError> {
        if round as usize > ROUNDS {
            return Err(AesError::BadRound(round));
        }
        Ok(RoundKey { bytes, round })
    }

    /// Round key 0, which is the cipher key itself.
    pub fn initial(key: [u8; KEY_LEN]) -> Self {
        RoundKey {
            bytes: key,
            round: 0,
        }
    }

    pub fn bytes(&self) -> &[u8; 16] {
        &self.bytes
    }

    pub fn round(&self) -> u8 {
        self.round
    }

    /// Derives the next round key from this one alone.
    pub fn step(&self) -> Result<RoundKey, AesError> {
        if self.round as usize >= ROUNDS {
            return Err(AesError::StepPastLast(self.round));
        }
        let next = self.round + 1;
        Ok(RoundKey {
            bytes: step_bytes(&self.bytes, next),
            round: next,
        })
    }

    /// Recovers the previous round key. Exact inverse of [`RoundKey::step`].
    pub fn unstep(&self) -> Result<RoundKey, AesError> {
        if self.round == 0 {
            return Err(AesError::UnstepBeforeFirst);
        }
        Ok(RoundKey {
            bytes: unstep_bytes(&self.bytes, self.round),
            round: self.round - 1,
        })
    }
}

/// SubWord(RotWord(w)) for the word at `bytes[12..16]`.
fn sub_rot(w: &[u8]) -> [u8; 4] {
    [
        SBOX[w[1] as usize],
        SBOX[w[2] as usize],
        SBOX[w[3] as usize],
        SBOX[w[0] as usize],
    ]
}

/// Produces round key `next` from round key `next - 1`.
pub fn step_bytes(prev: &[u8; 16], next: u8) -> [u8; 16] {
    let mut out = [0u8; 16];
    let t = sub_rot(&prev[12..16]);
    for i in 0..4 {
        out[i] = prev[i] ^ t[i];
    }
    out[0] ^= RCON[next as usize];
    for i in 4..16 {
        out[i] = prev[i] ^ out[i - 4];
    }
    out
}

/// Produces round key `cur - 1` from round key `cur`.
pub fn unstep_bytes(cur: &[u8; 16], cur_round: u8) -> [u8; 16] {
    let mut out = [0u8; 16];
    // Words 3, 2, 1 cancel against their left neighbour.
    for i in (4..16).rev() {
        out[i] = cur[i] ^ cur[i - 4];
    }
    let t = sub_rot(&out[12..16]);
    for i in 0..4 {
        out[i] = cur[i] ^ t[i];
    }
    out[0] ^= RCON[cur_round as usize];
    out
}

/// The 11 round keys of AES-128.
#[derive(Clone, PartialEq, Eq)]
pub struct KeySchedule {
    keys: [[u8; 16]; ROUNDS + 1],
}

impl fmt::Debug for KeySchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.keys.iter().map(hex::encode))
            .finish()
    }
}

impl KeySchedule {
    pub fn round_key(&self, i: usize) -> RoundKey {
        RoundKey {
            bytes: self.keys[i],
            round: i as u8,
        }
    }

    pub fn round_keys(&self) -> impl Iterator<Item = RoundKey> + '_ {
        (0..=ROUNDS).map(|i| self.round_key(i))
    }

    pub fn as_bytes(&self) -> &[[u8; 16]; ROUNDS + 1] {
        &self.keys
    }

    /// Decryption keys for rounds 1..=9 in equivalent-inverse-cipher form.
    pub fn inverse_middle_keys(&self) -> [[u8; 16]; ROUNDS - 1] {
        let mut out = [[0u8; 16]; ROUNDS - 1];
        for (r, slot) in (1..ROUNDS).zip(out.iter_mut()) {
            let mut k = self.keys[r];
            inv_mix_columns(&mut k);
            *slot = k;
        }
        out
    }

    /// Every distinct 128-bit quantity a precomputing implementation keeps
    /// for both directions: 11 encryption keys plus 9 transformed middle keys.
    pub fn stored_quantities(&self) -> Vec<[u8; 16]> {
        let mut v: Vec<[u8; 16]> = self.keys.to_vec();
        v.extend_from_slice(&self.inverse_middle_keys());
        v
    }
}

/// FIPS-197 key expansion.
pub fn expand_key(key: &[u8]) -> Result<KeySchedule, AesError> {
    let key: [u8; KEY_LEN] = key.try_into().map_err(|_| AesError::Length {
        expected: KEY_LEN,
        actual: key.len(),
    })?;
    Ok(expand(&key))
}

pub fn expand(key: &[u8; KEY_LEN]) -> KeySchedule {
    let mut keys = [[0u8; 16]; ROUNDS + 1];
    keys[0] = *key;
    for r in 1..=ROUNDS {
        keys[r] = step_bytes(&keys[r - 1], r as u8);
    }
    KeySchedule { keys }
}

fn add_round_key(s: &mut [u8; 16], k: &[u8; 16]) {
    for (a, b) in s.iter_mut().zip(k) {
        *a ^= b;
    }
}

fn sub_bytes(s: &mut [u8; 16], table: &[u8; 256]) {
    for b in s.iter_mut() {
        *b = table[*b as usize];
    }
}

// State is column-major: byte (row r, column c) lives at 4c + r.
fn shift_rows(s: &mut [u8; 16]) {
    let t = *s;
    for c in 0..4 {
        for r in 0..4 {
            s[4 * c + r] = t[4 * ((c + r) % 4) + r];
        }
    }
}

fn inv_shift_rows(s: &mut [u8; 16]) {
    let t = *s;
    for c in 0..4 {
        for r in 0..4 {
            s[4 * ((c + r) % 4) + r] = t[4 * c + r];
        }
    }
}

fn mix_columns(s: &mut [u8; 16]) {
    for c in s.chunks_exact_mut(4) {
        let [a0, a1, a2, a3] = [c[0], c[1], c[2], c[3]];
        c[0] = gmul(a0, 2) ^ gmul(a1, 3) ^ a2 ^ a3;
        c[1] = a0 ^ gmul(a1, 2) ^ gmul(a2, 3) ^ a3;
        c[2] = a0 ^ a1 ^ gmul(a2, 2) ^ gmul(a3, 3);
        c[3] = gmul(a0, 3) ^ a1 ^ a2 ^ gmul(a3, 2);
    }
}

fn inv_mix_columns(s: &mut [u8; 16]) {
    for c in s.chunks_exact_mut(4) {
        let [a0, a1, a2, a3] = [c[0], c[1], c[2], c[3]];
        c[0] = gmul(a0, 14) ^ gmul(a1, 11) ^ gmul(a2, 13) ^ gmul(a3, 9);
        c[1] = gmul(a0, 9) ^ gmul(a1, 14) ^ gmul(a2, 11) ^ gmul(a3, 13);
        c[2] = gmul(a0, 13) ^ gmul(a1, 9) ^ gmul(a2, 14) ^ gmul(a3, 11);
        c[3] = gmul(a0, 11) ^ gmul(a1, 13) ^ gmul(a2, 9) ^ gmul(a3, 14);
    }
}

pub fn encrypt_block(schedule: &KeySchedule, plaintext: &Block) -> Block {
    let k = &schedule.keys;
    let mut s = plaintext.0;
    add_round_key(&mut s, &k[0]);
    for rk in &k[1..ROUNDS] {
        sub_bytes(&mut s, &SBOX);
        shift_rows(&mut s);
        mix_columns(&mut s);
        add_round_key(&mut s, rk);
    }
    sub_bytes(&mut s, &SBOX);
    shift_rows(&mut s);
    add_round_key(&mut s, &k[ROUNDS]);
    Block(s)
}

pub fn decrypt_block(schedule: &KeySchedule, ciphertext: &Block) -> Block {
    let k = &schedule.keys;
    let dk = schedule.inverse_middle_keys();
    let mut s = ciphertext.0;
    add_round_key(&mut s, &k[ROUNDS]);
    for rk in dk.iter().rev() {
        sub_bytes(&mut s, &INV_SBOX);
        inv_shift_rows(&mut s);
        inv_mix_columns(&mut s);
        add_round_key(&mut s, rk);
    }
    sub_bytes(&mut s, &INV_SBOX);
    inv_shift_rows(&mut s);
    add_round_key(&mut s, &k[0]);
    Block(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h16(s: &str) -> [u8; 16] {
        hex::decode(s).unwrap().try_into().unwrap()
    }

    #[test]
    fn round_key_zero_is_the_key() {
        let key = h16("2b7e151628aed2a6abf7158809cf4f3c");
        assert_eq!(expand(&key).round_key(0).bytes(), &key);
    }

    #[test]
    fn schedule_has_eleven_keys() {
        assert_eq!(expand(&[0; 16]).round_keys().count(), 11);
    }

    #[test]
    fn step_past_ten_fails() {
        let rk10 = expand(&[7; 16]).round_key(10);
        assert_eq!(rk10.step(), Err(AesError::StepPastLast(10)));
    }

    #[test]
    fn unstep_round_zero_fails() {
        assert_eq!(
            RoundKey::initial([1; 16]).unstep(),
            Err(AesError::UnstepBeforeFirst)
        );
    }

    #[test]
    fn bad_lengths_rejected() {
        assert!(matches!(
            expand_key(&[0; 15]),
            Err(AesError::Length {
                expected: 16,
                actual: 15
            })
        ));
        assert!(Block::try_from(&[0u8; 17][..]).is_err());
        assert!(RoundKey::new([0; 16], 11).is_err());
    }

    #[test]
    fn twenty_stored_quantities_are_distinct() {
        let q = expand(&h16("000102030405060708090a0b0c0d0e0f")).stored_quantities();
        assert_eq!(q.len(), 20);
        let mut d = q.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 20);
    }
}
