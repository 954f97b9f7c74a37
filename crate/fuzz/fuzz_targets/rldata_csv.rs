#![no_main]

use erval_core::synth::load_rldata_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok((truth, attrs)) = load_rldata_csv(data) {
        assert_eq!(truth.len(), attrs.len());
    }
});
