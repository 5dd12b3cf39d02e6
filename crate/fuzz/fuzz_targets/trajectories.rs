#![no_main]

use libfuzzer_sys::fuzz_target;
use longdpm::io::parse_trajectories;

fuzz_target!(|text: &str| {
    if let Ok(records) = parse_trajectories(text) {
        for (_, samples) in &records {
            assert!(samples.windows(2).all(|w| w[0].0 < w[1].0));
        }
    }
});
