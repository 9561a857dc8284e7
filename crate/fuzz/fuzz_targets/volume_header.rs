#![no_main]

use amnesia_core::blockdev::VolumeHeader;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(h) = VolumeHeader::from_json(text) {
        assert_eq!(VolumeHeader::from_json(&h.to_json()).unwrap(), h);
    }
});
