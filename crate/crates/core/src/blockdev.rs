//! File-backed encrypted block device.
//!
//! 512-byte sectors, CBC inside each sector with the sector number as IV
//! (64-bit little-endian, zero-padded to 16 bytes), no chaining across
//! sectors. In multikey mode sector `n` uses key `n mod 64`. Chaining and IVs
//! are computed here; the engines only ever see single blocks.
//!
//! A JSON header sidecar (`<data file>.json`) records geometry, mode,
//! variant, and a salted key-check value. Raw keys are never written.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aes::Block;
use crate::engine::{self, EngineError};
use crate::image::sidecar_path;
use crate::keymaster::{AesContext, KeyError, KeyMaster, Variant};
use crate::machine::Machine;

pub const SECTOR_SIZE: usize = 512;
pub const BLOCKS_PER_SECTOR: usize = SECTOR_SIZE / 16;
pub const MULTIKEY_COUNT: usize = 64;
pub const HEADER_VERSION: u32 = 1;
pub const IV_RULE: &str = "plain64le";

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("volume I/O: {0}")]
    Io(#[from] io::Error),
    #[error("{mode} mode needs {expected} keys, got {got}")]
    KeyCount {
        mode: KeyMode,
        expected: usize,
        got: usize,
    },
    #[error("sector {sector} out of range (volume has {count})")]
    SectorRange { sector: u64, count: u64 },
    #[error("sector data must be {SECTOR_SIZE} bytes, got {0}")]
    SectorLength(usize),
    #[error("bad volume header: {0}")]
    Header(String),
    #[error("keys do not match this volume")]
    WrongKeys,
    #[error("backing file is {actual} bytes, header implies {expected}")]
    Geometry { expected: u64, actual: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Key(#[from] KeyError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyMode {
    Single,
    Multikey64,
}

impl KeyMode {
    pub fn key_count(self) -> usize {
        match self {
            KeyMode::Single => 1,
            KeyMode::Multikey64 => MULTIKEY_COUNT,
        }
    }

    pub fn key_index(self, sector: u64) -> usize {
        match self {
            KeyMode::Single => 0,
            KeyMode::Multikey64 => (sector % MULTIKEY_COUNT as u64) as usize,
        }
    }
}

impl std::fmt::Display for KeyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KeyMode::Single => "single",
            KeyMode::Multikey64 => "multikey64",
        })
    }
}

impl FromStr for KeyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "single" => Ok(KeyMode::Single),
            "multikey64" | "multikey" => Ok(KeyMode::Multikey64),
            other => Err(format!("unknown key mode {other:?}")),
        }
    }
}

/// What sits between the sector data and the backing file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceCipher {
    /// A loopback mapping with no encryption.
    Naked,
    #[serde(untagged)]
    Engine(Variant),
}

impl std::fmt::Display for DeviceCipher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeviceCipher::Naked => f.write_str("naked"),
            DeviceCipher::Engine(v) => v.fmt(f),
        }
    }
}

impl FromStr for DeviceCipher {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "naked" {
            Ok(DeviceCipher::Naked)
        } else {
            s.parse().map(DeviceCipher::Engine)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub version: u32,
    pub mode: KeyMode,
    pub cipher: DeviceCipher,
    pub sector_size: u32,
    pub sector_count: u64,
    pub iv: String,
    pub salt: String,
    /// Salted hash of each key's encryption of the zero block.
    pub key_check: String,
}

impl VolumeHeader {
    pub fn from_json(text: &str) -> Result<Self, VolumeError> {
        let h: VolumeHeader =
            serde_json::from_str(text).map_err(|e| VolumeError::Header(e.to_string()))?;
        h.validate()?;
        Ok(h)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("header serializes")
    }

    fn validate(&self) -> Result<(), VolumeError> {
        let bad = |s: &str| Err(VolumeError::Header(s.to_string()));
        if self.version != HEADER_VERSION {
            return bad("unsupported version");
        }
        if self.sector_size as usize != SECTOR_SIZE {
            return bad("sector size must be 512");
        }
        if self.iv != IV_RULE {
            return bad("unknown IV rule");
        }
        if self.sector_count == 0 || self.sector_count.checked_mul(SECTOR_SIZE as u64).is_none() {
            return bad("sector count out of range");
        }
        let hex_ok = |s: &str, n: usize| s.len() == n && s.bytes().all(|b| b.is_ascii_hexdigit());
        if !hex_ok(&self.salt, 32) || !hex_ok(&self.key_check, 64) {
            return bad("salt or key check malformed");
        }
        Ok(())
    }

    pub fn data_len(&self) -> u64 {
        self.sector_count * SECTOR_SIZE as u64
    }
}

/// The IV for sector `n`.
pub fn sector_iv(n: u64) -> [u8; 16] {
    let mut iv = [0u8; 16];
    iv[..8].copy_from_slice(&n.to_le_bytes());
    iv
}

/// Parses a key file: 16 bytes for one key, 1024 bytes for 64 keys.
pub fn parse_key_file(bytes: &[u8]) -> Result<Vec<[u8; 16]>, VolumeError> {
    if bytes.is_empty()
        || !bytes.len().is_multiple_of(16)
        || !matches!(bytes.len() / 16, 1 | MULTIKEY_COUNT)
    {
        return Err(VolumeError::Header(format!(
            "key file must hold 1 or {MULTIKEY_COUNT} keys of 16 bytes, got {} bytes",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| c.try_into().expect("16-byte chunk"))
        .collect())
}

pub struct Volume {
    path: PathBuf,
    file: File,
    header: VolumeHeader,
    contexts: Vec<AesContext>,
}

impl std::fmt::Debug for Volume {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Volume")
            .field("path", &self.path)
            .field("header", &self.header)
            .finish_non_exhaustive()
    }
}

fn build_contexts(
    m: &mut Machine,
    km: &mut KeyMaster,
    keys: &mut [[u8; 16]],
    mode: KeyMode,
    cipher: DeviceCipher,
) -> Result<Vec<AesContext>, VolumeError> {
    if keys.len() != mode.key_count() {
        let got = keys.len();
        keys.iter_mut().for_each(|k| k.fill(0));
        return Err(VolumeError::KeyCount {
            mode,
            expected: mode.key_count(),
            got,
        });
    }
    let mut contexts = Vec::with_capacity(keys.len());
    for key in keys.iter_mut() {
        match cipher {
            DeviceCipher::Naked => key.fill(0),
            DeviceCipher::Engine(v) => contexts.push(km.set_key(m, key, v)?),
        }
    }
    Ok(contexts)
}

fn key_check(m: &mut Machine, contexts: &[AesContext], salt: &[u8]) -> Result<String, VolumeError> {
    let mut h = Sha256::new();
    h.update(salt);
    for ctx in contexts {
        h.update(engine::encrypt(m, ctx, &Block([0; 16]))?.0);
    }
    Ok(hex::encode(h.finalize()))
}

impl Volume {
    /// Allocates the backing file and writes the header sidecar. Key buffers
    /// are zeroed whether or not creation succeeds.
    pub fn create(
        m: &mut Machine,
        km: &mut KeyMaster,
        path: &Path,
        sector_count: u64,
        keys: &mut [[u8; 16]],
        mode: KeyMode,
        cipher: DeviceCipher,
    ) -> Result<Volume, VolumeError> {
        let contexts = build_contexts(m, km, keys, mode, cipher)?;
        if sector_count == 0 {
            return Err(VolumeError::Header("sector count must be positive".into()));
        }
        let salt = km.rng_mut().next_block()?;
        let header = VolumeHeader {
            version: HEADER_VERSION,
            mode,
            cipher,
            sector_size: SECTOR_SIZE as u32,
            sector_count,
            iv: IV_RULE.to_string(),
            salt: hex::encode(salt),
            key_check: key_check(m, &contexts, &salt)?,
        };
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        file.set_len(header.data_len())?;
        fs::write(sidecar_path(path), header.to_json())?;
        Ok(Volume {
            path: path.to_path_buf(),
            file,
            header,
            contexts,
        })
    }

    /// Opens an existing volume, rebuilding its contexts from `keys`.
    pub fn open(
        m: &mut Machine,
        km: &mut KeyMaster,
        path: &Path,
        keys: &mut [[u8; 16]],
    ) -> Result<Volume, VolumeError> {
        let text = fs::read_to_string(sidecar_path(path));
        let header = match text {
            Ok(t) => VolumeHeader::from_json(&t),
            Err(e) => {
                keys.iter_mut().for_each(|k| k.fill(0));
                return Err(e.into());
            }
        };
        let header = header.inspect_err(|_| keys.iter_mut().for_each(|k| k.fill(0)))?;
        let contexts = build_contexts(m, km, keys, header.mode, header.cipher)?;
        let salt = hex::decode(&header.salt).map_err(|e| VolumeError::Header(e.to_string()))?;
        if key_check(m, &contexts, &salt)? != header.key_check {
            return Err(VolumeError::WrongKeys);
        }
        let file = OpenOptions::new().read(true).write(true).open(path)?;
        let actual = file.metadata()?.len();
        if actual != header.data_len() {
            return Err(VolumeError::Geometry {
                expected: header.data_len(),
                actual,
            });
        }
        Ok(Volume {
            path: path.to_path_buf(),
            file,
            header,
            contexts,
        })
    }

    pub fn header(&self) -> &VolumeHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn sector_count(&self) -> u64 {
        self.header.sector_count
    }

    pub fn contexts(&self) -> &[AesContext] {
        &self.contexts
    }

    fn check_sector(&self, n: u64) -> Result<(), VolumeError> {
        if n >= self.header.sector_count {
            return Err(VolumeError::SectorRange {
                sector: n,
                count: self.header.sector_count,
            });
        }
        Ok(())
    }

    pub fn write_sector(
        &mut self,
        m: &mut Machine,
        n: u64,
        data: &[u8],
    ) -> Result<(), VolumeError> {
        self.check_sector(n)?;
        if data.len() != SECTOR_SIZE {
            return Err(VolumeError::SectorLength(data.len()));
        }
        let mut out = [0u8; SECTOR_SIZE];
        match self.header.cipher {
            DeviceCipher::Naked => out.copy_from_slice(data),
            DeviceCipher::Engine(_) => {
                let ctx = self.contexts[self.header.mode.key_index(n)];
                let mut prev = sector_iv(n);
                for (src, dst) in data.chunks_exact(16).zip(out.chunks_exact_mut(16)) {
                    let mut x = [0u8; 16];
                    for i in 0..16 {
                        x[i] = src[i] ^ prev[i];
                    }
                    prev = engine::encrypt(m, &ctx, &Block(x))?.0;
                    dst.copy_from_slice(&prev);
                }
            }
        }
        self.file.seek(SeekFrom::Start(n * SECTOR_SIZE as u64))?;
        self.file.write_all(&out)?;
        Ok(())
    }

    pub fn read_sector(
        &mut self,
        m: &mut Machine,
        n: u64,
    ) -> Result<[u8; SECTOR_SIZE], VolumeError> {
        self.check_sector(n)?;
        let mut raw = [0u8; SECTOR_SIZE];
        self.file.seek(SeekFrom::Start(n * SECTOR_SIZE as u64))?;
        self.file.read_exact(&mut raw)?;
        let DeviceCipher::Engine(_) = self.header.cipher else {
            return Ok(raw);
        };
        let ctx = self.contexts[self.header.mode.key_index(n)];
        let mut out = [0u8; SECTOR_SIZE];
        let mut prev = sector_iv(n);
        for (src, dst) in raw.chunks_exact(16).zip(out.chunks_exact_mut(16)) {
            let c: [u8; 16] = src.try_into().expect("16-byte chunk");
            let p = engine::decrypt(m, &ctx, &Block(c))?.0;
            for i in 0..16 {
                dst[i] = p[i] ^ prev[i];
            }
            prev = c;
        }
        Ok(out)
    }

    pub fn flush(&mut self) -> Result<(), VolumeError> {
        self.file.flush()?;
        Ok(())
    }
}
