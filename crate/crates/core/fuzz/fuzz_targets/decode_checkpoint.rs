#![no_main]

use echowall::segnet::NetParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = NetParams::from_bytes(data) {
        NetParams::from_bytes(&p.to_bytes()).expect("re-encoded checkpoint decodes");
    }
});
