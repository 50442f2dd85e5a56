//! Fuzzes the sweep-list parsers: arbitrary input must be rejected or
//! expand to a bounded, finite list (ranges like "0..4000000000" must hit
//! the expansion cap, not allocate).

#![no_main]

use libfuzzer_sys::fuzz_target;
use volterra_stealth::config::{parse_f64_list, parse_u32_list};

/// Mirror of the parser's documented expansion cap.
const MAX_LIST: usize = 10_000;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(list) = parse_u32_list(text) {
        assert!(!list.is_empty(), "accepted lists are non-empty");
        assert!(list.len() <= MAX_LIST, "expansion respects the cap");
    }
    if let Ok(list) = parse_f64_list(text) {
        assert!(!list.is_empty(), "accepted lists are non-empty");
        assert!(list.len() <= MAX_LIST, "expansion respects the cap");
        assert!(list.iter().all(|v| v.is_finite()), "accepted values are finite");
    }
});
