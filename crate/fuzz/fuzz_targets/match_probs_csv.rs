#![no_main]

use erval_core::sampling::PairProbabilities;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = PairProbabilities::read_csv(data);
});
