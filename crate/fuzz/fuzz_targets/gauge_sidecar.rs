#![no_main]

use libfuzzer_sys::fuzz_target;
use longdpm::io::GaugeSidecar;

fuzz_target!(|text: &str| {
    if let Ok(s) = GaugeSidecar::parse(text) {
        assert_eq!(GaugeSidecar::parse(&s.to_json()).unwrap(), s);
    }
});
