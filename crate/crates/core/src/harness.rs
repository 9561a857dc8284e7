//! Benchmarks: CPU-only block loops and sector workloads over a volume.

use std::fmt::Write as _;
use std::io;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aes::Block;
use crate::blockdev::{DeviceCipher, KeyMode, Volume, VolumeError, SECTOR_SIZE};
use crate::engine::{self, EngineError};
use crate::keymaster::{KeyError, KeyMaster, Rng, Variant};
use crate::machine::{Machine, MachineConfig, MachineError, Mode};

/// Slowdowns reported for the original prototype, printed for comparison.
pub const REPORTED_DEVICE_VS_AES: f64 = 2.04;
pub const REPORTED_DEVICE_VS_NAKED: f64 = 2.23;
pub const REPORTED_CPU_VS_AES: f64 = 3.77;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Machine(#[from] MachineError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("I/O: {0}")]
    Io(#[from] io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("round trip mismatch in sector {0}")]
    Mismatch(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Workload {
    SeqWrite,
    SeqRead,
    RandomRead,
}

impl Workload {
    pub const ALL: [Workload; 3] = [Workload::SeqWrite, Workload::SeqRead, Workload::RandomRead];

    pub fn name(self) -> &'static str {
        match self {
            Workload::SeqWrite => "seq-write",
            Workload::SeqRead => "seq-read",
            Workload::RandomRead => "random-read",
        }
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Workload::ALL
            .into_iter()
            .find(|w| w.name() == s)
            .ok_or_else(|| format!("unknown workload {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub variant: String,
    pub workload: String,
    pub ops: Option<u64>,
    pub megabytes: Option<f64>,
    pub wall_ms: f64,
    pub instructions: u64,
    pub rounds: u64,
    pub mb_per_s: Option<f64>,
    pub ratio_vs_plain: Option<f64>,
}

/// A machine whose mode suits `cipher`: audit for the plain engine, which
/// stores its schedule, enforcing otherwise.
pub fn machine_for(cipher: DeviceCipher) -> Result<Machine, MachineError> {
    let cfg = match cipher {
        DeviceCipher::Engine(v) if v.required_mode() == Mode::Audit => MachineConfig::audit(),
        _ => MachineConfig::default(),
    };
    Machine::new(cfg)
}

/// Runs `n_ops` block operations alternating encrypt and decrypt, each fed
/// the previous output.
pub fn bench_cpu(variant: Variant, n_ops: u64, seed: u64) -> Result<BenchRow, HarnessError> {
    let mut m = machine_for(DeviceCipher::Engine(variant))?;
    let mut rng = Rng::from_u64(seed);
    let mut key = rng.next_block()?;
    let mut km = KeyMaster::new(rng);
    let ctx = km.set_key(&mut m, &mut key, variant)?;
    let mut block = Block([0; 16]);
    m.reset_counters();
    let start = Instant::now();
    for i in 0..n_ops {
        block = if i % 2 == 0 {
            engine::encrypt(&mut m, &ctx, &block)?
        } else {
            engine::decrypt(&mut m, &ctx, &block)?
        };
    }
    let wall = start.elapsed();
    Ok(BenchRow {
        variant: variant.to_string(),
        workload: "cpu".into(),
        ops: Some(n_ops),
        megabytes: None,
        wall_ms: wall.as_secs_f64() * 1e3,
        instructions: m.instruction_count(),
        rounds: m.round_count(),
        mb_per_s: None,
        ratio_vs_plain: None,
    })
}

fn sectors_for(megabytes: f64) -> u64 {
    ((megabytes * (1 << 20) as f64) / SECTOR_SIZE as f64)
        .ceil()
        .max(1.0) as u64
}

fn sector_data(rng: &mut ChaCha8Rng, n: u64) -> [u8; SECTOR_SIZE] {
    use rand::RngCore;
    let mut d = [0u8; SECTOR_SIZE];
    rng.fill_bytes(&mut d);
    d[..8].copy_from_slice(&n.to_le_bytes());
    d
}

/// Keys for a volume, all drawn from `seed`.
pub fn volume_keys(seed: u64, mode: KeyMode) -> Vec<[u8; 16]> {
    let mut rng = Rng::from_u64(seed ^ 0x6b65_7973);
    (0..mode.key_count())
        .map(|_| rng.next_block().expect("seeded"))
        .collect()
}

/// Times one sector workload over a fresh volume in `dir`. Read workloads
/// fill the volume first, untimed.
pub fn bench_device(
    cipher: DeviceCipher,
    workload: Workload,
    megabytes: f64,
    seed: u64,
    dir: &Path,
) -> Result<BenchRow, HarnessError> {
    let mut m = machine_for(cipher)?;
    let mut km = KeyMaster::new(Rng::from_u64(seed));
    let sectors = sectors_for(megabytes);
    let path = dir.join(format!("bench-{cipher}-{}.img", workload.name()));
    let mut keys = volume_keys(seed, KeyMode::Single);
    let mut v = Volume::create(
        &mut m,
        &mut km,
        &path,
        sectors,
        &mut keys,
        KeyMode::Single,
        cipher,
    )?;
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    let fill =
        |v: &mut Volume, m: &mut Machine, rng: &mut ChaCha8Rng| -> Result<(), HarnessError> {
            for n in 0..sectors {
                v.write_sector(m, n, &sector_data(rng, n))?;
            }
            Ok(())
        };
    let mut order: Vec<u64> = (0..sectors).collect();
    if workload == Workload::RandomRead {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)));
    }
    if workload != Workload::SeqWrite {
        fill(&mut v, &mut m, &mut data_rng)?;
    }
    m.reset_counters();
    let start = Instant::now();
    match workload {
        Workload::SeqWrite => fill(&mut v, &mut m, &mut data_rng)?,
        _ => {
            for &n in &order {
                std::hint::black_box(v.read_sector(&mut m, n)?);
            }
        }
    }
    v.flush()?;
    let wall = start.elapsed().as_secs_f64();
    let mb = (sectors * SECTOR_SIZE as u64) as f64 / (1 << 20) as f64;
    std::fs::remove_file(&path).ok();
    std::fs::remove_file(crate::image::sidecar_path(&path)).ok();
    Ok(BenchRow {
        variant: cipher.to_string(),
        workload: workload.name().into(),
        ops: None,
        megabytes: Some(mb),
        wall_ms: wall * 1e3,
        instructions: m.instruction_count(),
        rounds: m.round_count(),
        mb_per_s: Some(mb / wall.max(1e-9)),
        ratio_vs_plain: None,
    })
}

/// Sets each row's wall-time ratio against the plain row of the same
/// workload, if there is one.
pub fn fill_ratios(rows: &mut [BenchRow]) {
    let plain: Vec<(String, f64)> = rows
        .iter()
        .filter(|r| r.variant == Variant::Plain.name())
        .map(|r| (r.workload.clone(), r.wall_ms))
        .collect();
    for r in rows.iter_mut() {
        r.ratio_vs_plain = plain
            .iter()
            .find(|(w, _)| *w == r.workload)
            .filter(|(_, ms)| *ms > 0.0)
            .map(|(_, ms)| r.wall_ms / ms);
    }
}

fn size_cell(r: &BenchRow) -> String {
    match (r.ops, r.megabytes) {
        (Some(n), _) => format!("{n} ops"),
        (None, Some(mb)) => format!("{mb:.2} MB"),
        _ => "-".into(),
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

const COLUMNS: [&str; 7] = [
    "variant",
    "workload",
    "ops/MB",
    "wall ms",
    "instructions",
    "MB/s",
    "ratio-vs-plain",
];

fn cells(r: &BenchRow) -> [String; 7] {
    [
        r.variant.clone(),
        r.workload.clone(),
        size_cell(r),
        format!("{:.1}", r.wall_ms),
        r.instructions.to_string(),
        opt(r.mb_per_s, 2),
        opt(r.ratio_vs_plain, 2),
    ]
}

pub fn render_table(rows: &[BenchRow]) -> String {
    let body: Vec<[String; 7]> = rows.iter().map(cells).collect();
    let mut width = COLUMNS.map(str::len);
    for row in &body {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[String]| {
        let padded: Vec<String> = row
            .iter()
            .zip(width)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&mut out, &COLUMNS.map(String::from));
    for row in &body {
        line(&mut out, row);
    }
    out
}

/// Measured ratios next to the prototype's figures.
pub fn reference_note(rows: &[BenchRow]) -> String {
    let ratio = |variant: &str, workload: &str| {
        rows.iter()
            .find(|r| r.variant == variant && r.workload == workload)
            .and_then(|r| r.ratio_vs_plain)
    };
    let mut out = String::new();
    if let Some(r) = ratio("amnesia", "cpu") {
        let _ = writeln!(
            out,
            "cpu amnesia/plain: measured {r:.2}x, reported {REPORTED_CPU_VS_AES:.2}x"
        );
    }
    for w in Workload::ALL {
        if let Some(r) = ratio("amnesia", w.name()) {
            let _ = writeln!(
                out,
                "{} amnesia/plain: measured {r:.2}x, reported {REPORTED_DEVICE_VS_AES:.2}x",
                w.name()
            );
        }
        let naked = rows
            .iter()
            .find(|r| r.variant == "naked" && r.workload == w.name());
        let amnesia = rows
            .iter()
            .find(|r| r.variant == "amnesia" && r.workload == w.name());
        if let (Some(n), Some(a)) = (naked, amnesia) {
            let r = a.wall_ms / n.wall_ms.max(1e-9);
            let _ = writeln!(
                out,
                "{} amnesia/naked: measured {r:.2}x, reported {REPORTED_DEVICE_VS_NAKED:.2}x",
                w.name()
            );
        }
    }
    out
}

pub fn write_csv<W: io::Write>(rows: &[BenchRow], out: W) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record(cells(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Result of writing and reading back a whole volume.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundTrip {
    pub sectors: u64,
    /// SHA-256 of the backing file after all writes.
    pub ciphertext_digest: String,
}

/// Writes every sector of a new volume with seeded data, reads each back and
/// compares.
pub fn volume_round_trip(
    cipher: DeviceCipher,
    mode: KeyMode,
    megabytes: f64,
    seed: u64,
    path: &Path,
) -> Result<RoundTrip, HarnessError> {
    let mut m = machine_for(cipher)?;
    let mut km = KeyMaster::new(Rng::from_u64(seed));
    let sectors = sectors_for(megabytes);
    let mut keys = volume_keys(seed, mode);
    let mut v = Volume::create(&mut m, &mut km, path, sectors, &mut keys, mode, cipher)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..sectors {
        v.write_sector(&mut m, n, &sector_data(&mut rng, n))?;
    }
    v.flush()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..sectors {
        if v.read_sector(&mut m, n)? != sector_data(&mut rng, n) {
            return Err(HarnessError::Mismatch(n));
        }
    }
    let digest = Sha256::digest(std::fs::read(path)?);
    Ok(RoundTrip {
        sectors,
        ciphertext_digest: hex::encode(digest),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cpu_rows_order_and_round_counts() {
        let rows: Vec<BenchRow> = Variant::ALL
            .iter()
            .map(|&v| bench_cpu(v, 6, 1).unwrap())
            .collect();
        let (a, x, p) = (&rows[0], &rows[1], &rows[2]);
        assert!(a.instructions > x.instructions && x.instructions > p.instructions);
        assert_eq!(a.rounds, 2 * 6 * 10);
        assert_eq!(p.rounds, 6 * 10);
    }

    #[test]
    fn ratios_and_table() {
        let mut rows: Vec<BenchRow> = Variant::ALL
            .iter()
            .map(|&v| bench_cpu(v, 4, 2).unwrap())
            .collect();
        fill_ratios(&mut rows);
        assert_eq!(rows[2].ratio_vs_plain, Some(1.0));
        let t = render_table(&rows);
        assert_eq!(t.lines().count(), 4);
        assert!(t.lines().next().unwrap().contains("ratio-vs-plain"));
        assert!(reference_note(&rows).contains("3.77x"));
        let mut csv = Vec::new();
        write_csv(&rows, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(
            text.starts_with("variant,workload,ops/MB,wall ms,instructions,MB/s,ratio-vs-plain\n")
        );
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn device_rows() {
        let dir = tempfile::tempdir().unwrap();
        for w in Workload::ALL {
            let r = bench_device(
                DeviceCipher::Engine(Variant::Xornesia),
                w,
                0.02,
                3,
                dir.path(),
            )
            .unwrap();
            assert_eq!(r.workload, w.name());
            assert!(r.mb_per_s.unwrap() > 0.0);
            assert!(r.instructions > 0);
        }
        let naked =
            bench_device(DeviceCipher::Naked, Workload::SeqRead, 0.02, 3, dir.path()).unwrap();
        assert_eq!(naked.instructions, 0);
    }

    #[test]
    fn round_trip_digest_matches_across_variants() {
        let dir = tempfile::tempdir().unwrap();
        let digests: Vec<String> = Variant::ALL
            .iter()
            .map(|&v| {
                let p = dir.path().join(format!("{v}.img"));
                volume_round_trip(DeviceCipher::Engine(v), KeyMode::Multikey64, 0.04, 9, &p)
                    .unwrap()
                    .ciphertext_digest
            })
            .collect();
        assert!(digests.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn workload_names_parse() {
        for w in Workload::ALL {
            assert_eq!(w.name().parse::<Workload>().unwrap(), w);
        }
        assert!("dd".parse::<Workload>().is_err());
    }
}
