#![no_main]

use abductive_mtl::io::{parse_truth, write_truth};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = parse_truth(text) {
        assert_eq!(parse_truth(&write_truth(&t)).unwrap(), t);
    }
});
