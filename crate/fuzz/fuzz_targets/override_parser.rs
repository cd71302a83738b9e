#![no_main]

use gyroshape::scenario::{load_scenario_str, parse_override, shipped};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok((path, _)) = parse_override(text) {
        assert!(!path.is_empty());
        assert!(path.iter().all(|s| !s.is_empty()));
    }
    let base = shipped("paper-fig4").unwrap();
    let _ = load_scenario_str(base, &[text.to_string()]);
});
