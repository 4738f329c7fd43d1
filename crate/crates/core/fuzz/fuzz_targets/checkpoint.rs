#![no_main]

use abductive_mtl::io::{parse_checkpoint, write_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(params) = parse_checkpoint(text) {
        assert_eq!(parse_checkpoint(&write_checkpoint(&params)).unwrap(), params);
        let x = vec![0.5; params.input_dim()];
        let t = params.predict_features(&x).expect("matching input");
        assert!(t > 0.0 && t < 1.0);
    }
});
