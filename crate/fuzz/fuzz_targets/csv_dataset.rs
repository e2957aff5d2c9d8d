#![no_main]

use actens::data::parse_csv_dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = parse_csv_dataset(text) {
        assert!(ds.features().iter().all(|v| v.is_finite()));
        assert!(ds.labels().iter().all(|&l| l < ds.classes()));
    }
});
