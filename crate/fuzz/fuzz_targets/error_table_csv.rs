#![no_main]

use erval_core::report::{estimates_from_table, EstimateOptions};
use erval_core::ErrorTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(table) = ErrorTable::read_csv(data) else { return };
    // Estimation on parsed rows returns Ok or Err, never panics.
    let _ = estimates_from_table(&table, "external", None, &EstimateOptions::default());
});
