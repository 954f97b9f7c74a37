#![no_main]

use erval_core::labeling::audit::{read_tags_csv, write_tags_csv};
use erval_core::labeling::audit_frequencies;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(tags) = read_tags_csv(data) else { return };
    let _ = audit_frequencies(&tags);
    let mut out = Vec::new();
    write_tags_csv(&tags, &mut out).unwrap();
    assert_eq!(read_tags_csv(out.as_slice()).unwrap().len(), tags.len());
});
