#![no_main]

use erval_core::{AttributeTable, NameIndex};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = AttributeTable::read_csv(data) {
        let _ = NameIndex::build(&t);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        AttributeTable::read_csv(out.as_slice()).unwrap();
    }
});
