#![no_main]

use axonvox_core::stats::{compare_samples, read_columns, CompareParams};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(cols) = read_columns(data) else {
        return;
    };
    let names: Vec<&str> = cols.keys().map(String::as_str).take(2).collect();
    let p = CompareParams {
        n_perm: 50,
        n_boot: 50,
        ..CompareParams::default()
    };
    let _ = compare_samples(&cols, &cols, &names, &p);
});
