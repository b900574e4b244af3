#![no_main]

use axonvox_core::semseg::ForestModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = ForestModel::from_json(data) {
        for v in [0.0f32, 0.5, 1.0] {
            let _ = m.predict_one(&vec![v; m.n_channels]);
        }
        let back = ForestModel::from_json(m.to_json().unwrap().as_bytes()).unwrap();
        assert_eq!(back, m);
    }
});
