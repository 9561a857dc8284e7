#![no_main]

use amnesia_core::coldboot::{recover_xor_master, scan_key_schedules, search_needle};
use libfuzzer_sys::fuzz_target;

// First byte picks the tolerance; the rest is treated as a RAM image.
fuzz_target!(|data: &[u8]| {
    let Some((&t, image)) = data.split_first() else {
        return;
    };
    for hit in scan_key_schedules(image, u32::from(t % 33)) {
        assert!(hit.offset + 176 <= image.len());
    }
    let key: [u8; 16] = std::array::from_fn(|i| image.get(i).copied().unwrap_or(0));
    for (offset, _) in recover_xor_master(image, &key) {
        assert!(offset + 32 <= image.len());
    }
    let _ = search_needle(image, &key);
});
