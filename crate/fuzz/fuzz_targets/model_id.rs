#![no_main]

use actens::data::{parse_shape, DataSource};
use actens::ensemble::build_ensembles;
use actens::ModelId;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_shape(text);
    let _ = DataSource::parse(text);
    if let Ok(id) = text.parse::<ModelId>() {
        let again: ModelId = id.to_string().parse().expect("displayed id parses");
        assert_eq!(again.to_string(), id.to_string());
    }
    let ids: Vec<String> = text.split('\n').map(String::from).collect();
    let _ = build_ensembles(&ids);
});
