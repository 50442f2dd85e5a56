//! Fuzzes the system-config JSON decoder: arbitrary documents must either
//! be rejected or produce a validated config whose canonical re-rendering
//! parses back to the same hash.

#![no_main]

use libfuzzer_sys::fuzz_target;
use volterra_stealth::SystemConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = SystemConfig::from_json_str(text) {
        let canonical = config.to_json_string();
        let again = SystemConfig::from_json_str(&canonical).expect("canonical JSON re-parses");
        assert_eq!(
            again.config_hash(),
            config.config_hash(),
            "canonical rendering is hash-stable"
        );
    }
});
