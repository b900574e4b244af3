//! Edit log lines, replayed onto a small label volume.
#![no_main]

use axonvox_core::{Dims, LabelKind, LabelVolume, VoxelSize};
use axonvox_pipeline::edits::{parse_log, replay};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(entries) = parse_log(data) else {
        return;
    };
    let d = Dims::new(8, 6, 4);
    let labels: Vec<u32> = (0..d.len()).map(|i| [0, 2, 3, 4][(i / 7) % 4]).collect();
    let orig = LabelVolume::new(d, VoxelSize::isotropic(40.0), LabelKind::AxonInstance, labels).unwrap();
    let mut lv = orig.clone();
    if let Ok(mut stack) = replay(&mut lv, &entries, None) {
        while let Some(u) = stack.pop() {
            u.apply(&mut lv);
        }
        assert_eq!(lv, orig);
    }
});
