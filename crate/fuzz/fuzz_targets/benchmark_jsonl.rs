#![no_main]

use erval_core::labeling::BenchmarkSet;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(set) = BenchmarkSet::read_jsonl(data) {
        let _ = set.to_sample();
        let mut out = Vec::new();
        set.write_jsonl(&mut out).unwrap();
        BenchmarkSet::read_jsonl(out.as_slice()).unwrap();
    }
});
