#![no_main]

use amnesia_core::blockdev::parse_key_file;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(keys) = parse_key_file(data) {
        assert_eq!(keys.concat(), data);
    }
});
