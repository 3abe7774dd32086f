#![no_main]

use echowall::pseudolabel::parse_accept_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ids) = parse_accept_list(text) {
        assert!(ids.iter().all(|id| !id.is_empty()));
    }
});
