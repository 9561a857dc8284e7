//! Constant AES tables, built at compile time.
//!
//! Word tables pack one column as `b0 << 24 | b1 << 16 | b2 << 8 | b3`, the
//! same big-endian convention the simulated machine uses for 32-bit loads.

const fn xtime(x: u8) -> u8 {
    (x << 1) ^ if x & 0x80 != 0 { 0x1b } else { 0 }
}

pub(crate) const fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        a = xtime(a);
        b >>= 1;
    }
    p
}

const fn ginv(x: u8) -> u8 {
    // x^254 = x^-1 in GF(2^8); maps 0 to 0.
    let mut result = 1u8;
    let mut base = x;
    let mut e = 254u32;
    while e != 0 {
        if e & 1 != 0 {
            result = gmul(result, base);
        }
        base = gmul(base, base);
        e >>= 1;
    }
    result
}

const fn build_sbox() -> [u8; 256] {
    let mut s = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        let b = ginv(i as u8);
        s[i] = b ^ b.rotate_left(1) ^ b.rotate_left(2) ^ b.rotate_left(3) ^ b.rotate_left(4) ^ 0x63;
        i += 1;
    }
    s
}

const fn invert(s: &[u8; 256]) -> [u8; 256] {
    let mut inv = [0u8; 256];
    let mut i = 0;
    while i < 256 {
        inv[s[i] as usize] = i as u8;
        i += 1;
    }
    inv
}

pub const SBOX: [u8; 256] = build_sbox();
pub const INV_SBOX: [u8; 256] = invert(&SBOX);

/// Round constants for rounds 1..=10 (index 0 unused).
pub const RCON: [u8; 11] = [
    0x00, 0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1b, 0x36,
];

const fn word(b0: u8, b1: u8, b2: u8, b3: u8) -> u32 {
    ((b0 as u32) << 24) | ((b1 as u32) << 16) | ((b2 as u32) << 8) | b3 as u32
}

/// Column tables for the forward round: `TE[0][x] = [2s, s, s, 3s]` rotated
/// right by one byte per table index.
const fn build_te() -> [[u32; 256]; 4] {
    let mut t = [[0u32; 256]; 4];
    let mut i = 0;
    while i < 256 {
        let s = SBOX[i];
        let w = word(gmul(s, 2), s, s, gmul(s, 3));
        t[0][i] = w;
        t[1][i] = w.rotate_right(8);
        t[2][i] = w.rotate_right(16);
        t[3][i] = w.rotate_right(24);
        i += 1;
    }
    t
}

const fn build_td() -> [[u32; 256]; 4] {
    let mut t = [[0u32; 256]; 4];
    let mut i = 0;
    while i < 256 {
        let s = INV_SBOX[i];
        let w = word(gmul(s, 14), gmul(s, 9), gmul(s, 13), gmul(s, 11));
        t[0][i] = w;
        t[1][i] = w.rotate_right(8);
        t[2][i] = w.rotate_right(16);
        t[3][i] = w.rotate_right(24);
        i += 1;
    }
    t
}

/// InvMixColumns contribution of a raw byte at each row position.
const fn build_imc() -> [[u32; 256]; 4] {
    let mut t = [[0u32; 256]; 4];
    let mut i = 0;
    while i < 256 {
        let b = i as u8;
        let w = word(gmul(b, 14), gmul(b, 9), gmul(b, 13), gmul(b, 11));
        t[0][i] = w;
        t[1][i] = w.rotate_right(8);
        t[2][i] = w.rotate_right(16);
        t[3][i] = w.rotate_right(24);
        i += 1;
    }
    t
}

/// A byte substitution placed at one of the four row positions.
const fn build_positional(s: &[u8; 256]) -> [[u32; 256]; 4] {
    let mut t = [[0u32; 256]; 4];
    let mut i = 0;
    while i < 256 {
        let v = s[i] as u32;
        t[0][i] = v << 24;
        t[1][i] = v << 16;
        t[2][i] = v << 8;
        t[3][i] = v;
        i += 1;
    }
    t
}

pub const TE: [[u32; 256]; 4] = build_te();
pub const TD: [[u32; 256]; 4] = build_td();
pub const IMC: [[u32; 256]; 4] = build_imc();
pub const SUB: [[u32; 256]; 4] = build_positional(&SBOX);
pub const INV_SUB: [[u32; 256]; 4] = build_positional(&INV_SBOX);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbox_known_entries() {
        assert_eq!(SBOX[0x00], 0x63);
        assert_eq!(SBOX[0x01], 0x7c);
        assert_eq!(SBOX[0x53], 0xed);
        assert_eq!(SBOX[0xff], 0x16);
        assert_eq!(INV_SBOX[0x63], 0x00);
    }

    #[test]
    fn sbox_is_a_permutation() {
        let mut seen = [false; 256];
        for &b in SBOX.iter() {
            assert!(!seen[b as usize]);
            seen[b as usize] = true;
        }
    }

    #[test]
    fn imc_inverts_mix_columns() {
        // MixColumns of [db 13 53 45] is [8e 4d a1 bc].
        let mixed = [0x8eu8, 0x4d, 0xa1, 0xbc];
        let w = IMC[0][mixed[0] as usize]
            ^ IMC[1][mixed[1] as usize]
            ^ IMC[2][mixed[2] as usize]
            ^ IMC[3][mixed[3] as usize];
        assert_eq!(w, 0xdb135345);
    }
}
