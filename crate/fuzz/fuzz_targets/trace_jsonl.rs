#![no_main]

use gyroshape::scenario::{read_trace_jsonl, write_trace_to, TraceFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(trace) = read_trace_jsonl(text) {
        let mut out = Vec::new();
        write_trace_to(&trace, &mut out, TraceFormat::Jsonl).unwrap();
        let again = read_trace_jsonl(std::str::from_utf8(&out).unwrap()).unwrap();
        assert_eq!(again.records.len(), trace.records.len());
    }
});
