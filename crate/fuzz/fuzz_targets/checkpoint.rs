#![no_main]

use actens::Network;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // Cap the input so a declared layer size cannot ask for huge buffers.
    if text.len() > 1 << 16 {
        return;
    }
    if let Ok(net) = Network::from_json(text) {
        let again = Network::from_json(&net.to_json()).expect("written checkpoint loads");
        assert_eq!(again.param_groups(), net.param_groups());
    }
});
