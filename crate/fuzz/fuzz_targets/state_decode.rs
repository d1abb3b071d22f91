#![no_main]

use libfuzzer_sys::fuzz_target;
use vacflow_core::checkpoint::{decode_state, encode_state};

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = decode_state(data) {
        assert_eq!(encode_state(&state), data);
    }
});
