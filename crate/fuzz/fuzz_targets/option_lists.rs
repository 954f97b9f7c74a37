#![no_main]

use erval_core::labeling::Direction;
use erval_core::report::parse_metrics;
use erval_core::stats::SummaryStat;
use erval_core::Design;
use libfuzzer_sys::fuzz_target;

// Names that arrive from the command line and from query strings.
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = parse_metrics(s);
    let _ = Design::parse(s);
    let _ = SummaryStat::parse(s);
    let _ = Direction::parse(s);
});
