//! Cold-boot attacker: bit decay, needle search, and a key-schedule scanner
//! in the style of `aeskeyfind`.
//!
//! The scanner treats every 16-byte window as a possible round key `j`,
//! regenerates the whole schedule from it, and accepts the schedule if the
//! 160 bytes around the anchor match to within `tolerance` bits. Anchoring
//! at any round, not only round 0, keeps a schedule findable when its first
//! key happens to have decayed.

use std::collections::BTreeMap;

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aes::tables::{RCON, SBOX};
use crate::aes::{step_bytes, unstep_bytes, ROUNDS};
use crate::image::MemoryImage;
use crate::machine::Machine;

const SCHEDULE_LEN: usize = 16 * (ROUNDS + 1);

#[derive(Debug, Error)]
pub enum ColdbootError {
    #[error("decay probability {0} is not in [0, 1]")]
    Probability(f64),
    #[error("bad attack report: {0}")]
    Report(String),
}

/// Flips each bit of `img` independently with probability `p`. The same
/// seed always flips the same bits.
pub fn decay(img: &MemoryImage, p: f64, seed: u64) -> Result<MemoryImage, ColdbootError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ColdbootError::Probability(p));
    }
    let mut out = img.clone();
    let bytes = out.bytes_mut();
    if p == 0.0 {
        return Ok(out);
    }
    if p == 1.0 {
        bytes.iter_mut().for_each(|b| *b = !*b);
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gap = Geometric::new(p).expect("p in (0, 1)");
    let total = bytes.len() as u64 * 8;
    let mut bit = gap.sample(&mut rng);
    while bit < total {
        bytes[(bit / 8) as usize] ^= 0x80 >> (bit % 8);
        bit = bit.saturating_add(1).saturating_add(gap.sample(&mut rng));
    }
    Ok(out)
}

/// Number of differing bits between two equal-length byte strings.
pub fn hamming(a: &[u8], b: &[u8]) -> u64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x ^ y).count_ones() as u64)
        .sum()
}

/// Every offset at which `needle` occurs exactly.
pub fn search_needle(haystack: &[u8], needle: &[u8]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    haystack
        .windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleHit {
    /// Offset of round key 0.
    pub offset: usize,
    pub key: [u8; 16],
    /// Bits in the non-anchor round keys that differ from the image.
    pub bit_errors: u32,
    pub anchor_round: u8,
}

fn word(b: &[u8]) -> u128 {
    u128::from_be_bytes(b.try_into().expect("16 bytes"))
}

/// Where the round constant lands after one schedule step: the first byte
/// of each word.
const fn rcon_masks() -> [u128; ROUNDS + 1] {
    let mut out = [0u128; ROUNDS + 1];
    let mut i = 0;
    while i <= ROUNDS {
        let r = RCON[i] as u128;
        out[i] = (r << 120) | (r << 88) | (r << 56) | (r << 24);
        i += 1;
    }
    out
}

const RCON_MASKS: [u128; ROUNDS + 1] = rcon_masks();

/// `step_bytes(prev, j + 1)` for every j at once: the result for round j is
/// the returned value XORed with `RCON_MASKS[j + 1]`.
fn step_without_rcon(prev: &[u8]) -> u128 {
    let t = [
        SBOX[prev[13] as usize],
        SBOX[prev[14] as usize],
        SBOX[prev[15] as usize],
        SBOX[prev[12] as usize],
    ];
    let mut out = [0u8; 16];
    for i in 0..4 {
        out[i] = prev[i] ^ t[i];
    }
    for i in 4..16 {
        out[i] = prev[i] ^ out[i - 4];
    }
    u128::from_be_bytes(out)
}

fn verify(
    bytes: &[u8],
    start: usize,
    anchor: u8,
    w: &[u8; 16],
    tolerance: u32,
) -> Option<ScheduleHit> {
    let mut keys = [[0u8; 16]; ROUNDS + 1];
    keys[anchor as usize] = *w;
    for r in (1..=anchor).rev() {
        keys[r as usize - 1] = unstep_bytes(&keys[r as usize], r);
    }
    for r in anchor as usize + 1..=ROUNDS {
        keys[r] = step_bytes(&keys[r - 1], r as u8);
    }
    let mut errors = 0u32;
    for (r, k) in keys.iter().enumerate() {
        if r == anchor as usize {
            continue;
        }
        let at = start + 16 * r;
        errors += (word(k) ^ word(&bytes[at..at + 16])).count_ones();
        if errors > tolerance {
            return None;
        }
    }
    Some(ScheduleHit {
        offset: start,
        key: keys[0],
        bit_errors: errors,
        anchor_round: anchor,
    })
}

fn hits_at(bytes: &[u8], o: usize, tolerance: u32, out: &mut Vec<ScheduleHit>) {
    let w: [u8; 16] = bytes[o..o + 16].try_into().expect("16 bytes");
    if o + 32 <= bytes.len() {
        let d = step_without_rcon(&w) ^ word(&bytes[o + 16..o + 32]);
        for j in 0..ROUNDS {
            let Some(start) = o.checked_sub(16 * j) else {
                break;
            };
            if start + SCHEDULE_LEN > bytes.len() {
                continue;
            }
            if (d ^ RCON_MASKS[j + 1]).count_ones() <= tolerance {
                out.extend(verify(bytes, start, j as u8, &w, tolerance));
            }
        }
    }
    if let Some(start) = o.checked_sub(16 * ROUNDS) {
        let back = unstep_bytes(&w, ROUNDS as u8);
        if (word(&back) ^ word(&bytes[o - 16..o])).count_ones() <= tolerance {
            out.extend(verify(bytes, start, ROUNDS as u8, &w, tolerance));
        }
    }
}

/// Finds AES-128 key schedules in `bytes` with at most `tolerance` bit
/// errors. One hit per (offset, key), sorted by offset.
pub fn scan_key_schedules(bytes: &[u8], tolerance: u32) -> Vec<ScheduleHit> {
    if bytes.len() < SCHEDULE_LEN {
        return Vec::new();
    }
    const CHUNK: usize = 1 << 14;
    let windows = bytes.len() - 15;
    let raw: Vec<ScheduleHit> = (0..windows.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut out = Vec::new();
            for o in c * CHUNK..((c + 1) * CHUNK).min(windows) {
                hits_at(bytes, o, tolerance, &mut out);
            }
            out
        })
        .collect();
    let mut best: BTreeMap<(usize, [u8; 16]), ScheduleHit> = BTreeMap::new();
    for h in raw {
        best.entry((h.offset, h.key))
            .and_modify(|b| {
                if (h.bit_errors, h.anchor_round) < (b.bit_errors, b.anchor_round) {
                    *b = h;
                }
            })
            .or_insert(h);
    }
    best.into_values().collect()
}

/// Looks for a xornesia context of the attacker's own `chosen_key`: two
/// adjacent blocks that XOR to the same value against round keys 0 and 10.
/// That value is the master key.
pub fn recover_xor_master(bytes: &[u8], chosen_key: &[u8; 16]) -> Vec<(usize, [u8; 16])> {
    let sched = crate::aes::expand(chosen_key);
    let (k0, k10) = (word(&sched.as_bytes()[0]), word(&sched.as_bytes()[ROUNDS]));
    if bytes.len() < 32 {
        return Vec::new();
    }
    (0..=bytes.len() - 32)
        .filter_map(|o| {
            let m = word(&bytes[o..o + 16]) ^ k0;
            (word(&bytes[o + 16..o + 32]) ^ k10 == m).then(|| (o, m.to_be_bytes()))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Probe {
    pub label: String,
    pub bytes: Vec<u8>,
}

impl Probe {
    pub fn new(label: impl Into<String>, bytes: &[u8]) -> Self {
        Probe {
            label: label.into(),
            bytes: bytes.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackParams {
    pub decay: f64,
    pub tolerance: u32,
    pub seed: u64,
}

impl Default for AttackParams {
    fn default() -> Self {
        AttackParams {
            decay: 0.0,
            tolerance: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveredKey {
    pub offset: usize,
    pub key: String,
    pub bit_errors: u32,
    pub anchor_round: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sighting {
    pub label: String,
    pub needle: String,
    pub offsets: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackReport {
    pub params: AttackParams,
    pub image_size: usize,
    pub config_digest: String,
    pub flipped_bits: u64,
    pub recovered: Vec<RecoveredKey>,
    pub sightings: Vec<Sighting>,
}

fn parse_hex16(s: &str) -> Result<[u8; 16], ColdbootError> {
    let v = hex::decode(s).map_err(|e| ColdbootError::Report(e.to_string()))?;
    v.try_into()
        .map_err(|_| ColdbootError::Report(format!("{s:?} is not 16 bytes")))
}

impl AttackReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ColdbootError> {
        let r: AttackReport =
            serde_json::from_str(text).map_err(|e| ColdbootError::Report(e.to_string()))?;
        if !(0.0..=1.0).contains(&r.params.decay) {
            return Err(ColdbootError::Probability(r.params.decay));
        }
        for k in &r.recovered {
            parse_hex16(&k.key)?;
            if k.anchor_round as usize > ROUNDS {
                return Err(ColdbootError::Report("anchor round past 10".into()));
            }
        }
        for s in &r.sightings {
            hex::decode(&s.needle).map_err(|e| ColdbootError::Report(e.to_string()))?;
        }
        Ok(r)
    }

    pub fn recovered_keys(&self) -> Vec<[u8; 16]> {
        let mut keys: Vec<[u8; 16]> = self
            .recovered
            .iter()
            .filter_map(|k| parse_hex16(&k.key).ok())
            .collect();
        keys.sort_unstable();
        keys.dedup();
        keys
    }

    pub fn recovers(&self, key: &[u8; 16]) -> bool {
        self.recovered_keys().contains(key)
    }

    pub fn sighting(&self, label: &str) -> Option<&Sighting> {
        self.sightings.iter().find(|s| s.label == label)
    }
}

/// Decays `img`, scans it for schedules, and searches it for each probe.
pub fn attack_image(
    img: &MemoryImage,
    params: AttackParams,
    probes: &[Probe],
) -> Result<AttackReport, ColdbootError> {
    let decayed = decay(img, params.decay, params.seed)?;
    let bytes = decayed.bytes();
    let recovered = scan_key_schedules(bytes, params.tolerance)
        .into_iter()
        .map(|h| RecoveredKey {
            offset: h.offset,
            key: hex::encode(h.key),
            bit_errors: h.bit_errors,
            anchor_round: h.anchor_round,
        })
        .collect();
    let sightings = probes
        .iter()
        .map(|p| Sighting {
            label: p.label.clone(),
            needle: hex::encode(&p.bytes),
            offsets: search_needle(bytes, &p.bytes),
        })
        .collect();
    Ok(AttackReport {
        params,
        image_size: bytes.len(),
        config_digest: img.meta().config_digest.clone(),
        flipped_bits: hamming(img.bytes(), bytes),
        recovered,
        sightings,
    })
}

/// Snapshots `m` at this instant and attacks the snapshot.
pub fn attack(
    m: &Machine,
    params: AttackParams,
    probes: &[Probe],
) -> Result<AttackReport, ColdbootError> {
    attack_image(&m.snapshot_ram(), params, probes)
}

/// Random bytes for padding test images, kept here so tests and the demo
/// agree on filler.
pub fn noise(len: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen()).collect()
}
