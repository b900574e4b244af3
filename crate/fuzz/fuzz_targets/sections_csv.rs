#![no_main]

use axonvox_core::morpho::{read_sections_csv, write_sections_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_sections_csv(data) {
        let mut out = Vec::new();
        write_sections_csv(&mut out, &rows).unwrap();
        let back = read_sections_csv(&out[..]).unwrap();
        assert_eq!(back.len(), rows.len());
    }
});
