#![no_main]

use libfuzzer_sys::fuzz_target;
use longdpm::io::FusionRecord;

fuzz_target!(|text: &str| {
    if let Ok(r) = FusionRecord::parse(text) {
        let _ = FusionRecord::parse(&r.to_json());
    }
});
