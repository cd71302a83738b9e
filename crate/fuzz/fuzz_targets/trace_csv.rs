#![no_main]

use gyroshape::scenario::{read_trace_csv, write_trace_to, TraceFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trace) = read_trace_csv(text) {
        // Whatever parses must survive a write and re-read unchanged.
        let mut out = Vec::new();
        write_trace_to(&trace, &mut out, TraceFormat::Csv).unwrap();
        let again = read_trace_csv(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(again.records.len(), trace.records.len());
        for (a, b) in trace.records.iter().zip(&again.records) {
            assert!(a.t.to_bits() == b.t.to_bits() || (a.t.is_nan() && b.t.is_nan()));
        }
    }
});
