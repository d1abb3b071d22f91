#![no_main]

use libfuzzer_sys::fuzz_target;
use vacflow_core::config::parse_config_str;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config_str(text) {
        // Anything accepted must survive its own echo.
        let echo = cfg.to_config_string();
        let again = parse_config_str(&echo).expect("echoed config must parse");
        assert_eq!(cfg, again);
    }
});
