#![no_main]

use erval_core::labeling::journal::{load_session, parse_entries};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((entries, good)) = parse_entries(data) else { return };
    assert!(good as usize <= data.len());
    // Replay validates every event against the state it applies to.
    let _ = load_session(&entries, None);
});
