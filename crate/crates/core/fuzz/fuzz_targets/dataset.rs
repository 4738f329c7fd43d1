#![no_main]

use abductive_mtl::io::{parse_dataset, write_dataset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(samples) = parse_dataset(text) {
        let again = parse_dataset(&write_dataset(&samples)).expect("written dataset parses");
        assert_eq!(again, samples);
    }
});
