mod common;

use amnesia_core::aes::{self, Block, RoundKey};
use common::*;
use proptest::prelude::*;

#[test]
fn fips_197_appendix_c1() {
    let s = aes::expand(&FIPS_KEY);
    assert_eq!(aes::encrypt_block(&s, &Block(FIPS_PLAIN)).0, FIPS_CIPHER);
    assert_eq!(aes::decrypt_block(&s, &Block(FIPS_CIPHER)).0, FIPS_PLAIN);
    assert_eq!(oracle_encrypt(&FIPS_KEY, &FIPS_PLAIN), FIPS_CIPHER);
}

#[test]
fn fips_197_appendix_a1_last_round_key() {
    let key: [u8; 16] = hex::decode("2b7e151628aed2a6abf7158809cf4f3c")
        .unwrap()
        .try_into()
        .unwrap();
    let rk10 = hex::decode("d014f9a8c9ee2589e13f0cc8b6630ca6").unwrap();
    assert_eq!(&aes::expand(&key).as_bytes()[10][..], &rk10[..]);
    assert_eq!(&oracle_schedule(&key)[10][..], &rk10[..]);
}

#[test]
fn key_length_is_checked() {
    assert!(aes::expand_key(&[0; 15]).is_err());
    assert!(aes::expand_key(&[0; 24]).is_err());
    assert!(aes::expand_key(&[0; 16]).is_ok());
}

#[test]
fn stepping_past_the_ends_fails() {
    let rk0 = RoundKey::initial([1; 16]);
    assert!(rk0.unstep().is_err());
    let mut k = rk0;
    for _ in 0..10 {
        k = k.step().unwrap();
    }
    assert_eq!(k.round(), 10);
    assert!(k.step().is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn schedule_matches_word_oracle(key in any::<[u8; 16]>()) {
        prop_assert_eq!(*aes::expand(&key).as_bytes(), oracle_schedule(&key));
    }

    #[test]
    fn step_and_unstep_are_inverse(bytes in any::<[u8; 16]>(), round in 0u8..10) {
        let k = RoundKey::new(bytes, round).unwrap();
        prop_assert_eq!(k.step().unwrap().unstep().unwrap(), k);
        let k = RoundKey::new(bytes, round + 1).unwrap();
        prop_assert_eq!(k.unstep().unwrap().step().unwrap(), k);
    }

    #[test]
    fn stepping_walks_the_schedule(key in any::<[u8; 16]>()) {
        let sched = oracle_schedule(&key);
        let mut k = RoundKey::initial(key);
        for expected in &sched[1..] {
            k = k.step().unwrap();
            prop_assert_eq!(k.bytes(), expected);
        }
        for r in (0..10).rev() {
            k = k.unstep().unwrap();
            prop_assert_eq!(k.bytes(), &sched[r]);
        }
    }

    #[test]
    fn encrypt_matches_oracle_and_decrypt_inverts(key in any::<[u8; 16]>(), p in any::<[u8; 16]>()) {
        let s = aes::expand(&key);
        let c = aes::encrypt_block(&s, &Block(p));
        prop_assert_eq!(c.0, oracle_encrypt(&key, &p));
        prop_assert_eq!(aes::decrypt_block(&s, &c).0, p);
        prop_assert_eq!(aes::decrypt_block(&s, &Block(p)).0, oracle_decrypt(&key, &p));
    }

    #[test]
    fn stored_quantities_are_schedule_plus_inverse_middle(key in any::<[u8; 16]>()) {
        let sched = oracle_schedule(&key);
        let q = aes::expand(&key).stored_quantities();
        prop_assert_eq!(q.len(), 20);
        prop_assert_eq!(&q[..11], &sched[..]);
        for r in 1..10 {
            prop_assert_eq!(q[10 + r], oracle_inv_mix(&sched[r]));
        }
    }
}
