//! Input: JSON header, a NUL byte, then the payload.
#![no_main]

use axonvox_core::io::{decode_labels, decode_volume, VolumeHeader};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some(nul) = data.iter().position(|&b| b == 0) else {
        let _ = VolumeHeader::parse(data);
        return;
    };
    let Ok(h) = VolumeHeader::parse(&data[..nul]) else {
        return;
    };
    let payload = &data[nul + 1..];
    if let Ok(v) = decode_volume(&h, payload) {
        assert_eq!(v.data.len(), v.dims.len());
        assert!(v.data.iter().all(|x| (0.0..=1.0).contains(x)));
    }
    if let Ok(l) = decode_labels(&h, payload) {
        assert_eq!(l.labels.len(), l.dims.len());
    }
});
