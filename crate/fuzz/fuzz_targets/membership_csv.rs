#![no_main]

use erval_core::Clustering;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(c) = Clustering::read_csv(data) else { return };
    // Anything accepted must survive a write and re-read unchanged.
    let mut out = Vec::new();
    c.write_csv(&mut out).unwrap();
    let back = Clustering::read_csv(out.as_slice()).unwrap();
    assert_eq!(back.len(), c.len());
    assert_eq!(back.num_clusters(), c.num_clusters());
});
