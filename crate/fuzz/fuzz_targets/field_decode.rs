#![no_main]

use libfuzzer_sys::fuzz_target;
use vacflow_core::checkpoint::{decode_field, encode_field};

fuzz_target!(|data: &[u8]| {
    if let Ok((grid, comps)) = decode_field(data) {
        let refs: Vec<&[f64]> = comps.iter().map(|c| c.as_slice()).collect();
        assert_eq!(encode_field(&grid, &refs), data);
    }
});
