#![no_main]

use libfuzzer_sys::fuzz_target;
use longdpm::synthetic::SceneSpec;

fuzz_target!(|text: &str| {
    if let Ok(spec) = SceneSpec::from_toml_str(text) {
        let _ = SceneSpec::from_toml_str(&spec.to_toml_string());
    }
});
