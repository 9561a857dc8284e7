use std::fs;
use std::path::{Path, PathBuf};

use amnesia_core::aes::{self, Block};
use amnesia_core::blockdev::{self, DeviceCipher, KeyMode, Volume, SECTOR_SIZE};
use amnesia_core::coldboot::{self, AttackParams, AttackReport, Probe};
use amnesia_core::engine;
use amnesia_core::harness::{self, BenchRow, Workload};
use amnesia_core::keymaster::WhichKey;
use amnesia_core::{KeyMaster, Rng, Variant};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "amnesia",
    version,
    about = "Cold-boot resistant disk encryption on a simulated machine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create, read and write encrypted volumes.
    #[command(subcommand)]
    Volume(VolumeCmd),
    /// Capture and scan simulated RAM.
    #[command(subcommand)]
    Attack(AttackCmd),
    /// CPU-only and sector-workload benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// End-to-end demonstrations.
    #[command(subcommand)]
    Demo(DemoCmd),
}

#[derive(Subcommand)]
enum VolumeCmd {
    /// Writes a key file of 1 or 64 random keys.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "single")]
        mode: KeyMode,
        #[arg(long)]
        seed: Option<u64>,
    },
    Create {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        sectors: u64,
        #[arg(long)]
        key_file: PathBuf,
        #[arg(long, default_value = "single")]
        mode: KeyMode,
        /// amnesia, xornesia, plain or naked.
        #[arg(long, default_value = "amnesia")]
        variant: DeviceCipher,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Encrypts up to 512 bytes from --input (zero-padded) into a sector.
    Write {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        key_file: PathBuf,
        #[arg(long)]
        sector: u64,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Decrypts a sector to --output, or as hex to stdout.
    Read {
        #[arg(long)]
        path: PathBuf,
        #[arg(long)]
        key_file: PathBuf,
        #[arg(long)]
        sector: u64,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum AttackCmd {
    /// Sets a key, runs block operations, then snapshots and scans RAM.
    Run(AttackArgs),
}

#[derive(Args, Clone)]
struct AttackArgs {
    #[arg(long, default_value = "amnesia")]
    variant: Variant,
    /// Per-bit flip probability applied to the snapshot.
    #[arg(long, default_value_t = 0.0)]
    decay: f64,
    /// Bit errors allowed when matching a key schedule.
    #[arg(long, default_value_t = 0)]
    tolerance: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Block operations to run before the snapshot.
    #[arg(long, default_value_t = 64)]
    ops: u64,
    /// Volume key as 32 hex digits, as an attacker who picks it would.
    #[arg(long, value_parser = parse_key_hex)]
    chosen_key: Option<[u8; 16]>,
    /// Writes the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCmd {
    Cpu {
        /// A variant name or "all".
        #[arg(long, default_value = "all")]
        variant: String,
        #[arg(long, default_value_t = 10_000)]
        ops: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    Device {
        /// A variant name, "naked", or "all".
        #[arg(long, default_value = "all")]
        variant: String,
        /// seq-write, seq-read, random-read, or "all".
        #[arg(long, default_value = "all")]
        workload: String,
        #[arg(long, default_value_t = 1.0)]
        mb: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Attacks a plain and an amnesia machine with identical inputs.
    Coldboot {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0.0005)]
        decay: f64,
        #[arg(long, default_value_t = 24)]
        tolerance: u32,
    },
}

fn parse_key_hex(s: &str) -> Result<[u8; 16], String> {
    let v = hex::decode(s).map_err(|e| e.to_string())?;
    v.try_into().map_err(|_| "key must be 16 bytes".to_string())
}

fn rng(seed: Option<u64>) -> Rng {
    seed.map_or_else(Rng::from_entropy, Rng::from_u64)
}

fn read_keys(path: &Path) -> Result<Vec<[u8; 16]>> {
    let bytes = fs::read(path).with_context(|| format!("reading key file {}", path.display()))?;
    Ok(blockdev::parse_key_file(&bytes)?)
}

fn open_volume(
    path: &Path,
    key_file: &Path,
    seed: Option<u64>,
) -> Result<(amnesia_core::Machine, Volume)> {
    let text = fs::read_to_string(amnesia_core::image::sidecar_path(path))
        .with_context(|| format!("reading header for {}", path.display()))?;
    let header = blockdev::VolumeHeader::from_json(&text)?;
    let mut m = harness::machine_for(header.cipher)?;
    let mut km = KeyMaster::new(rng(seed));
    let v = Volume::open(&mut m, &mut km, path, &mut read_keys(key_file)?)?;
    Ok((m, v))
}

fn volume(cmd: VolumeCmd) -> Result<()> {
    match cmd {
        VolumeCmd::Keygen { out, mode, seed } => {
            let mut r = rng(seed);
            let mut bytes = Vec::with_capacity(16 * mode.key_count());
            for _ in 0..mode.key_count() {
                bytes.extend_from_slice(&r.next_block()?);
            }
            fs::write(&out, &bytes)?;
            println!("wrote {} key(s) to {}", mode.key_count(), out.display());
        }
        VolumeCmd::Create {
            path,
            sectors,
            key_file,
            mode,
            variant,
            seed,
        } => {
            let mut m = harness::machine_for(variant)?;
            let mut km = KeyMaster::new(rng(seed));
            let v = Volume::create(
                &mut m,
                &mut km,
                &path,
                sectors,
                &mut read_keys(&key_file)?,
                mode,
                variant,
            )?;
            println!(
                "created {} ({} sectors, {}, {})",
                path.display(),
                v.sector_count(),
                v.header().mode,
                v.header().cipher
            );
        }
        VolumeCmd::Write {
            path,
            key_file,
            sector,
            input,
            seed,
        } => {
            let data = fs::read(&input)?;
            if data.len() > SECTOR_SIZE {
                bail!(
                    "input is {} bytes; a sector holds {SECTOR_SIZE}",
                    data.len()
                );
            }
            let mut buf = [0u8; SECTOR_SIZE];
            buf[..data.len()].copy_from_slice(&data);
            let (mut m, mut v) = open_volume(&path, &key_file, seed)?;
            v.write_sector(&mut m, sector, &buf)?;
            v.flush()?;
        }
        VolumeCmd::Read {
            path,
            key_file,
            sector,
            output,
            seed,
        } => {
            let (mut m, mut v) = open_volume(&path, &key_file, seed)?;
            let data = v.read_sector(&mut m, sector)?;
            match output {
                Some(p) => fs::write(p, data)?,
                None => println!("{}", hex::encode(data)),
            }
        }
    }
    Ok(())
}

struct AttackRun {
    report: AttackReport,
    master: Option<[u8; 16]>,
    volume_key: [u8; 16],
    wrapped_first: Option<[u8; 16]>,
    violations: usize,
}

fn run_attack(a: &AttackArgs) -> Result<AttackRun> {
    let cipher = DeviceCipher::Engine(a.variant);
    let mut m = harness::machine_for(cipher)?;
    let mut km = KeyMaster::new(Rng::from_u64(a.seed));
    let master = (a.variant != Variant::Plain)
        .then(|| Rng::from_u64(a.seed).next_block())
        .transpose()?;
    let volume_key = match a.chosen_key {
        Some(k) => k,
        None => harness::volume_keys(a.seed, KeyMode::Single)[0],
    };
    let ctx = km.set_key(&mut m, &mut volume_key.clone(), a.variant)?;
    let mut block = Block([0; 16]);
    for i in 0..a.ops {
        block = if i % 3 == 2 {
            engine::decrypt(&mut m, &ctx, &block)?
        } else {
            engine::encrypt(&mut m, &ctx, &block)?
        };
    }
    let wrapped_first = ctx.wrapped(&m, WhichKey::First);
    let mut probes = vec![Probe::new("volume_key", &volume_key)];
    if let Some(mk) = master {
        probes.push(Probe::new("master_key", &mk));
    }
    let sched = aes::expand(&volume_key);
    for (r, k) in sched.as_bytes().iter().enumerate().skip(1) {
        probes.push(Probe::new(format!("rk{r}"), k));
    }
    if let Some(w) = wrapped_first {
        probes.push(Probe::new("wrapped_first", &w));
    }
    if let Some(w) = ctx.wrapped(&m, WhichKey::Last) {
        probes.push(Probe::new("wrapped_last", &w));
    }
    let params = AttackParams {
        decay: a.decay,
        tolerance: a.tolerance,
        seed: a.seed,
    };
    let report = coldboot::attack(&m, params, &probes)?;
    Ok(AttackRun {
        report,
        master,
        volume_key,
        wrapped_first,
        violations: m.violations().len(),
    })
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn print_attack(a: &AttackArgs, run: &AttackRun) {
    let r = &run.report;
    println!("variant:            {}", a.variant);
    println!("decay / tolerance:  {} / {}", a.decay, a.tolerance);
    println!("flipped bits:       {}", r.flipped_bits);
    println!("store violations:   {}", run.violations);
    println!("schedules found:    {}", r.recovered.len());
    for k in &r.recovered {
        println!(
            "  {:#08x}  {}  ({} bit errors)",
            k.offset, k.key, k.bit_errors
        );
    }
    println!("volume key found:   {}", yes(r.recovers(&run.volume_key)));
    for s in &r.sightings {
        let at: Vec<String> = s.offsets.iter().map(|o| format!("{o:#x}")).collect();
        if !at.is_empty()
            || s.label.starts_with("wrapped")
            || s.label == "master_key"
            || s.label == "volume_key"
        {
            let shown = if at.is_empty() {
                "-".to_string()
            } else {
                at.join(" ")
            };
            println!("  needle {:<14} {}", s.label, shown);
        }
    }
    if let (Some(chosen), Variant::Xornesia) = (a.chosen_key, a.variant) {
        if let Some(w) = run.wrapped_first {
            let rk0 = aes::expand(&chosen).as_bytes()[0];
            let derived: Vec<u8> = w.iter().zip(rk0).map(|(x, y)| x ^ y).collect();
            let matches = run.master.map(|mk| mk[..] == derived[..]);
            println!("wrapped_first ^ rk0: {}", hex::encode(&derived));
            println!("equals master key:  {}", yes(matches == Some(true)));
        }
    }
}

fn attack(cmd: AttackCmd) -> Result<()> {
    let AttackCmd::Run(a) = cmd;
    let run = run_attack(&a)?;
    print_attack(&a, &run);
    if let Some(p) = &a.report {
        fs::write(p, run.report.to_json())?;
        println!("report written to {}", p.display());
    }
    Ok(())
}

fn variants(spec: &str) -> Result<Vec<Variant>> {
    if spec == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    spec.parse().map(|v| vec![v]).map_err(anyhow::Error::msg)
}

fn emit(mut rows: Vec<BenchRow>, csv: Option<PathBuf>) -> Result<()> {
    harness::fill_ratios(&mut rows);
    print!("{}", harness::render_table(&rows));
    let note = harness::reference_note(&rows);
    if !note.is_empty() {
        println!();
        print!("{note}");
    }
    if let Some(p) = csv {
        harness::write_csv(&rows, fs::File::create(&p)?)?;
    }
    Ok(())
}

fn bench(cmd: BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Cpu {
            variant,
            ops,
            seed,
            csv,
        } => {
            let rows = variants(&variant)?
                .into_iter()
                .map(|v| harness::bench_cpu(v, ops, seed))
                .collect::<Result<Vec<_>, _>>()?;
            emit(rows, csv)
        }
        BenchCmd::Device {
            variant,
            workload,
            mb,
            seed,
            csv,
        } => {
            let ciphers: Vec<DeviceCipher> = if variant == "all" {
                let mut c: Vec<DeviceCipher> =
                    Variant::ALL.into_iter().map(DeviceCipher::Engine).collect();
                c.push(DeviceCipher::Naked);
                c
            } else {
                vec![variant.parse().map_err(anyhow::Error::msg)?]
            };
            let workloads: Vec<Workload> = if workload == "all" {
                Workload::ALL.to_vec()
            } else {
                vec![workload.parse().map_err(anyhow::Error::msg)?]
            };
            if !(mb > 0.0 && mb.is_finite()) {
                bail!("--mb must be positive");
            }
            let dir = tempfile::tempdir()?;
            let mut rows = Vec::new();
            for w in workloads {
                for &c in &ciphers {
                    rows.push(harness::bench_device(c, w, mb, seed, dir.path())?);
                }
            }
            emit(rows, csv)
        }
    }
}

fn demo(cmd: DemoCmd) -> Result<()> {
    let DemoCmd::Coldboot {
        seed,
        decay,
        tolerance,
    } = cmd;
    for variant in [Variant::Plain, Variant::Amnesia] {
        let a = AttackArgs {
            variant,
            decay,
            tolerance,
            seed,
            ops: 64,
            chosen_key: None,
            report: None,
        };
        let run = run_attack(&a)?;
        println!("== {variant} ==");
        print_attack(&a, &run);
        println!();
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Volume(c) => volume(c),
        Command::Attack(c) => attack(c),
        Command::Bench(c) => bench(c),
        Command::Demo(c) => demo(c),
    }
}
