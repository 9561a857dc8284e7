//! Reference implementations that share no code with the library.
#![allow(dead_code)]

use aes::cipher::{generic_array::GenericArray, BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes128;

pub fn oracle_encrypt(key: &[u8; 16], block: &[u8; 16]) -> [u8; 16] {
    let c = Aes128::new(GenericArray::from_slice(key));
    let mut b = GenericArray::clone_from_slice(block);
    c.encrypt_block(&mut b);
    b.into()
}

pub fn oracle_decrypt(key: &[u8; 16], block: &[u8; 16]) -> [u8; 16] {
    let c = Aes128::new(GenericArray::from_slice(key));
    let mut b = GenericArray::clone_from_slice(block);
    c.decrypt_block(&mut b);
    b.into()
}

fn gf_mul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let hi = a & 0x80;
        a <<= 1;
        if hi != 0 {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    p
}

/// S-box entry from the field inverse and the affine map.
fn sbox(x: u8) -> u8 {
    let inv = if x == 0 {
        0
    } else {
        (1..=255u8).find(|&y| gf_mul(x, y) == 1).unwrap()
    };
    let mut s = inv;
    for i in 1..5 {
        s ^= inv.rotate_left(i);
    }
    s ^ 0x63
}

/// FIPS-197 KeyExpansion over 44 words.
pub fn oracle_schedule(key: &[u8; 16]) -> [[u8; 16]; 11] {
    let table: Vec<u8> = (0..=255u8).map(sbox).collect();
    let mut w = [0u32; 44];
    for i in 0..4 {
        w[i] = u32::from_be_bytes(key[4 * i..4 * i + 4].try_into().unwrap());
    }
    let mut rcon = 1u8;
    for i in 4..44 {
        let mut t = w[i - 1];
        if i % 4 == 0 {
            let b = t.rotate_left(8).to_be_bytes();
            t = u32::from_be_bytes([
                table[b[0] as usize],
                table[b[1] as usize],
                table[b[2] as usize],
                table[b[3] as usize],
            ]) ^ ((rcon as u32) << 24);
            rcon = gf_mul(rcon, 2);
        }
        w[i] = w[i - 4] ^ t;
    }
    let mut out = [[0u8; 16]; 11];
    for r in 0..11 {
        for c in 0..4 {
            out[r][4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c].to_be_bytes());
        }
    }
    out
}

/// InvMixColumns of one 16-byte round key, column by column.
pub fn oracle_inv_mix(k: &[u8; 16]) -> [u8; 16] {
    let mut out = [0u8; 16];
    for c in 0..4 {
        let a = &k[4 * c..4 * c + 4];
        for r in 0..4 {
            out[4 * c + r] = gf_mul(a[r], 14)
                ^ gf_mul(a[(r + 1) % 4], 11)
                ^ gf_mul(a[(r + 2) % 4], 13)
                ^ gf_mul(a[(r + 3) % 4], 9);
        }
    }
    out
}

/// CBC over one 512-byte sector with the sector number as IV.
pub fn oracle_sector(key: &[u8; 16], n: u64, data: &[u8; 512]) -> [u8; 512] {
    let mut prev = [0u8; 16];
    prev[..8].copy_from_slice(&n.to_le_bytes());
    let mut out = [0u8; 512];
    for b in 0..32 {
        let mut x = [0u8; 16];
        for i in 0..16 {
            x[i] = data[16 * b + i] ^ prev[i];
        }
        prev = oracle_encrypt(key, &x);
        out[16 * b..16 * b + 16].copy_from_slice(&prev);
    }
    out
}

pub const FIPS_KEY: [u8; 16] = [
    0x00, 0x01, 0x02, 0x03, 0x04, 0x05, 0x06, 0x07, 0x08, 0x09, 0x0a, 0x0b, 0x0c, 0x0d, 0x0e, 0x0f,
];
pub const FIPS_PLAIN: [u8; 16] = [
    0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0xcc, 0xdd, 0xee, 0xff,
];
pub const FIPS_CIPHER: [u8; 16] = [
    0x69, 0xc4, 0xe0, 0xd8, 0x6a, 0x7b, 0x04, 0x30, 0xd8, 0xcd, 0xb7, 0x80, 0x70, 0xb4, 0xc5, 0x5a,
];
