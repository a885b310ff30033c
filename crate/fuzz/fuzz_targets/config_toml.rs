#![no_main]

use idr_core::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = RunConfig::from_toml(text) {
            let again = RunConfig::from_toml(&config.to_toml()).expect("re-parse");
            assert_eq!(again.hash(), config.hash());
        }
    }
});
