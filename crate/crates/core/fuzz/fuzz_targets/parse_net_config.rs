#![no_main]

use echowall::segnet::NetConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = NetConfig::parse(text) {
        assert_eq!(NetConfig::parse(&cfg.to_text()).expect("round trip"), cfg);
    }
});
