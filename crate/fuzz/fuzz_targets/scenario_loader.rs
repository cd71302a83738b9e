#![no_main]

use gyroshape::scenario::load_scenario_str;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = load_scenario_str(text, &[]) {
            assert!(cfg.n_steps >= 1);
            assert!(cfg.mpc_stride() >= 1);
        }
    }
});
