#![no_main]

use echowall::dataset::EchoLabels;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(l) = EchoLabels::parse(text) {
        assert_eq!(EchoLabels::parse(&l.to_text()).expect("round trip"), l);
    }
});
