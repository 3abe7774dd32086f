#![no_main]

use echowall::classify::Model;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = Model::from_bytes(data) {
        Model::from_bytes(&m.to_bytes()).expect("re-encoded model decodes");
        let _ = m.predict(&vec![0.5; m.n_features]);
    }
});
