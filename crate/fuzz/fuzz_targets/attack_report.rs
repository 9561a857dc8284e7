#![no_main]

use amnesia_core::coldboot::AttackReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(r) = AttackReport::from_json(text) {
        let _ = r.recovered_keys();
        assert_eq!(
            AttackReport::from_json(&r.to_json()).unwrap().recovered,
            r.recovered
        );
    }
});
