#![no_main]

use erval_core::stats::parse_hill_grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(grid) = parse_hill_grid(s) {
        assert!(grid.iter().all(|q| *q >= 0.0));
    }
});
