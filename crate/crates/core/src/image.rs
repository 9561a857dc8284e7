//! RAM snapshots and their on-disk form: raw bytes plus a JSON sidecar.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image I/O: {0}")]
    Io(#[from] io::Error),
    #[error("bad image metadata: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("metadata says {declared} bytes but image has {actual}")]
    SizeMismatch { declared: usize, actual: usize },
    #[error("config digest is not 64 hex characters")]
    BadDigest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageMeta {
    pub size: usize,
    pub config_digest: String,
    pub captured_at_ms: u64,
}

/// A byte-exact copy of machine RAM.
#[derive(Clone, PartialEq, Eq)]
pub struct MemoryImage {
    bytes: Vec<u8>,
    meta: ImageMeta,
}

impl std::fmt::Debug for MemoryImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MemoryImage")
            .field("meta", &self.meta)
            .finish_non_exhaustive()
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

impl MemoryImage {
    pub(crate) fn new(bytes: Vec<u8>, meta: ImageMeta) -> Self {
        debug_assert_eq!(bytes.len(), meta.size);
        MemoryImage { bytes, meta }
    }

    /// Wraps arbitrary bytes, e.g. an image captured elsewhere.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        let meta = ImageMeta {
            size: bytes.len(),
            config_digest: "0".repeat(64),
            captured_at_ms: 0,
        };
        MemoryImage { bytes, meta }
    }

    /// Rebuilds an image from raw bytes and the sidecar JSON text.
    pub fn from_parts(bytes: Vec<u8>, sidecar: &str) -> Result<Self, ImageError> {
        let meta: ImageMeta = serde_json::from_str(sidecar)?;
        if meta.size != bytes.len() {
            return Err(ImageError::SizeMismatch {
                declared: meta.size,
                actual: bytes.len(),
            });
        }
        if meta.config_digest.len() != 64
            || !meta.config_digest.bytes().all(|b| b.is_ascii_hexdigit())
        {
            return Err(ImageError::BadDigest);
        }
        Ok(MemoryImage { bytes, meta })
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bytes_mut(&mut self) -> &mut [u8] {
        &mut self.bytes
    }

    pub fn meta(&self) -> &ImageMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&self.meta).expect("meta serializes")
    }

    /// Writes `path` (raw bytes) and `path.json` (metadata).
    pub fn save(&self, path: &Path) -> Result<(), ImageError> {
        fs::write(path, &self.bytes)?;
        fs::write(sidecar_path(path), self.sidecar_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ImageError> {
        let bytes = fs::read(path)?;
        let meta = fs::read_to_string(sidecar_path(path))?;
        Self::from_parts(bytes, &meta)
    }
}
