#![no_main]

use abductive_mtl::io::parse_targets;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(rows) = parse_targets(text) {
        let p = rows[0].targets.len();
        assert!(p >= 1 && rows.iter().all(|r| r.targets.len() == p));
    }
});
