#![no_main]

use libfuzzer_sys::fuzz_target;
use longdpm::PipelineConfig;

fuzz_target!(|text: &str| {
    if let Ok(cfg) = PipelineConfig::from_toml_str(text) {
        let again = PipelineConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }
});
