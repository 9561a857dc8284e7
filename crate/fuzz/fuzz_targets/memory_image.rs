#![no_main]

use amnesia_core::MemoryImage;
use libfuzzer_sys::fuzz_target;

// Input is `<sidecar json>\n<raw image bytes>`.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == b'\n').unwrap_or(data.len());
    let Ok(sidecar) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let raw = data.get(split + 1..).unwrap_or_default().to_vec();
    if let Ok(img) = MemoryImage::from_parts(raw.clone(), sidecar) {
        assert_eq!(img.bytes(), &raw[..]);
        let again = MemoryImage::from_parts(raw, &img.sidecar_json()).unwrap();
        assert_eq!(again, img);
    }
});
