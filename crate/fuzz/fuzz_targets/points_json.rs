//! Scribble and seed files.
#![no_main]

use axonvox_core::semseg::{parse_scribbles, parse_seeds};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_scribbles(data);
    if let Ok(seeds) = parse_seeds(data) {
        let back = serde_json::to_vec(&seeds).unwrap();
        assert_eq!(parse_seeds(&back).unwrap(), seeds);
    }
});
