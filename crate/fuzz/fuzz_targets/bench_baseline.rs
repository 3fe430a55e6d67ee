#![no_main]

use libfuzzer_sys::fuzz_target;
use rle_core::bench::Baseline;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = Baseline::parse(text);
    }
});
