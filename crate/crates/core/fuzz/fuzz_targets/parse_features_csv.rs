#![no_main]

use echowall::dataset::FeatureTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = FeatureTable::parse_csv(text) {
        assert!(t.rows.iter().all(|r| r.values.len() == t.names.len()));
        let _ = FeatureTable::parse_csv(&t.to_csv());
    }
});
