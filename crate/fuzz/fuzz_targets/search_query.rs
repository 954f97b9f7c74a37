#![no_main]

use erval_core::labeling::TokenIndex;
use erval_core::AttributeTable;
use libfuzzer_sys::fuzz_target;
use std::sync::OnceLock;

const RECORDS: &str = "record_id,label,city
r1,Lutgard De Jonghe,Leuven
r2,L. De Jonghe,Leuven
r3,Jan Peeters,Gent
r4,J. Peeters,Brugge
r5,Élodie Dubois-Müller,Liège
";

fn index() -> &'static TokenIndex {
    static INDEX: OnceLock<TokenIndex> = OnceLock::new();
    INDEX.get_or_init(|| TokenIndex::build(&AttributeTable::read_csv(RECORDS.as_bytes()).unwrap()))
}

fuzz_target!(|data: &[u8]| {
    let Ok(q) = std::str::from_utf8(data) else { return };
    if let Ok(page) = index().search(q, 0, 10) {
        assert!(page.hits.len() <= 10);
        assert!(page.hits.len() <= page.total);
    }
});
