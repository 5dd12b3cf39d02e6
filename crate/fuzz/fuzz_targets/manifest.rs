#![no_main]

use libfuzzer_sys::fuzz_target;
use longdpm::io::Manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Manifest::parse(data) {
        assert!(m.num_frames() >= 1);
        assert!(m.entry("points").is_some());
    }
});
