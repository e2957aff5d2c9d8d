#![no_main]

use actens::ScoreMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = ScoreMatrix::from_csv(text) {
        let back = ScoreMatrix::from_csv(&m.to_csv()).expect("written scores parse");
        assert_eq!(back, m);
    }
});
