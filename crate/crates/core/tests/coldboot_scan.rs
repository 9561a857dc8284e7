mod common;

use amnesia_core::coldboot::{self, AttackParams, Probe};
use amnesia_core::{engine, Block, KeyMaster, Machine, MachineConfig, MemoryImage, Rng, Variant};
use common::*;
use proptest::prelude::*;

const MIB: usize = 1 << 20;

#[test]
fn decay_count_on_one_mebibyte() {
    let img = MemoryImage::from_bytes(coldboot::noise(MIB, 11));
    let d = coldboot::decay(&img, 0.001, 12).unwrap();
    let flipped = coldboot::hamming(img.bytes(), d.bytes()) as f64;
    let n = 8.0 * MIB as f64;
    let (mean, sd) = (n * 0.001, (n * 0.001 * 0.999f64).sqrt());
    assert!((flipped - mean).abs() <= 5.0 * sd, "{flipped} vs {mean}");
}

#[test]
fn no_false_positives_on_random_images() {
    for seed in 0..100 {
        let bytes = coldboot::noise(MIB, 1000 + seed);
        assert!(
            coldboot::scan_key_schedules(&bytes, 0).is_empty(),
            "seed {seed}"
        );
    }
}

#[test]
fn amnesia_workload_leaves_nothing_to_find() {
    let seed = 77;
    let mut m = Machine::new(MachineConfig::default()).unwrap();
    let mut km = KeyMaster::new(Rng::from_u64(seed));
    let key = [0xe1u8; 16];
    let ctx = km
        .set_key(&mut m, &mut key.clone(), Variant::Amnesia)
        .unwrap();
    let mut b = Block([0; 16]);
    for _ in 0..200 {
        b = engine::encrypt(&mut m, &ctx, &b).unwrap();
    }
    let master = Rng::from_u64(seed).next_block().unwrap();
    let sched = oracle_schedule(&key);
    let mut probes = vec![Probe::new("master", &master)];
    for (r, k) in sched.iter().enumerate() {
        probes.push(Probe::new(format!("rk{r}"), k));
    }
    for t in [0, 16, 32] {
        let r = coldboot::attack(
            &m,
            AttackParams {
                decay: 0.0,
                tolerance: t,
                seed,
            },
            &probes,
        )
        .unwrap();
        assert!(r.recovered.is_empty());
        assert!(r.sightings.iter().all(|s| s.offsets.is_empty()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn planted_schedule_is_found(key in any::<[u8; 16]>(), at in 0usize..4000, seed in any::<u64>()) {
        let mut buf = coldboot::noise(4096 + 176, seed);
        for (r, k) in oracle_schedule(&key).iter().enumerate() {
            buf[at + 16 * r..at + 16 * r + 16].copy_from_slice(k);
        }
        let hits = coldboot::scan_key_schedules(&buf, 0);
        prop_assert!(hits.iter().any(|h| h.offset == at && h.key == key && h.bit_errors == 0));
    }

    #[test]
    fn decay_is_deterministic(seed in any::<u64>(), p in 0.0f64..0.05) {
        let img = MemoryImage::from_bytes(coldboot::noise(2048, 5));
        prop_assert_eq!(coldboot::decay(&img, p, seed).unwrap(), coldboot::decay(&img, p, seed).unwrap());
    }

    #[test]
    fn needle_search_finds_plant(needle in any::<[u8; 16]>(), at in 0usize..1000) {
        let mut buf = vec![0u8; 1024 + 16];
        buf[at..at + 16].copy_from_slice(&needle);
        prop_assert!(coldboot::search_needle(&buf, &needle).contains(&at));
    }
}
