#![no_main]

use abductive_mtl::io::{parse_knowledge_base, write_knowledge_base};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kb) = parse_knowledge_base(text) {
        assert_eq!(parse_knowledge_base(&write_knowledge_base(&kb)).unwrap(), kb);
    }
});
