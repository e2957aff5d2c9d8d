#![no_main]

use actens::data::{dataset_from_idx, parse_idx};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // First byte splits the input into an image file and a label file.
    let Some((&cut, rest)) = data.split_first() else { return };
    let cut = (cut as usize).min(rest.len());
    let (images, labels) = rest.split_at(rest.len() - cut);
    if let Ok(arr) = parse_idx(images) {
        assert_eq!(arr.data.len(), arr.dims.iter().product::<usize>());
        if let Ok(lbl) = parse_idx(labels) {
            let _ = dataset_from_idx(&arr, &lbl);
        }
    }
});
