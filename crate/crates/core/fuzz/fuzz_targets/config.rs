#![no_main]

use abductive_mtl::config::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ExperimentConfig::from_toml_str(text) {
        // Validation must reject bad values with an error, never a panic.
        let _ = config.validate();
    }
});
