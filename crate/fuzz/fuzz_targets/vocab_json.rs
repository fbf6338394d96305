#![no_main]

use libfuzzer_sys::fuzz_target;
use report_core::encoders::Vocabulary;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(vocab) = Vocabulary::from_json(text) {
        assert_eq!(Vocabulary::from_json(&vocab.to_json()).unwrap(), vocab);
    }
});
