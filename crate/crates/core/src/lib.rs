//! Cold-boot resistant disk encryption on a simulated register machine.
//!
//! The master key lives only in emulated MSRs, volume keys sit in RAM only in
//! wrapped form, and AES-128 runs with its key schedule derived on the fly in
//! registers. A per-register taint bit lets the machine check that no
//! key-derived value is ever written to RAM.
//!
//! - [`aes`]: reference AES-128 and the reversible round-key step
//! - [`machine`]: the simulated CPU with taint tracking, MSRs and interrupts
//! - [`keymaster`]: master-key generation and volume-key wrapping
//! - [`engine`]: amnesia, xornesia and plain per-block engines
//! - [`blockdev`]: file-backed encrypted volumes, CBC per sector
//! - [`coldboot`]: RAM capture, bit decay and key-schedule scanning
//! - [`harness`]: CPU and device benchmarks

pub mod aes;
pub mod blockdev;
pub mod coldboot;
pub mod engine;
pub mod harness;
pub mod image;
pub mod keymaster;
pub mod machine;

pub use aes::{Block, KeySchedule, RoundKey};
pub use image::MemoryImage;
pub use keymaster::{AesContext, KeyMaster, Rng, Variant};
pub use machine::{Machine, MachineConfig};
