#![no_main]

use libfuzzer_sys::fuzz_target;
use report_core::encoders::{build_vocab, tokenize, tokenize_and_pad};

fuzz_target!(|data: &[u8]| {
    let text = String::from_utf8_lossy(data);
    let tokens = tokenize(&text);
    let vocab = build_vocab([tokens.as_slice()], 1);
    let seq = tokenize_and_pad(&text, &vocab, 16);
    assert_eq!(seq.ids.len(), 16);
    assert_eq!(seq.true_length, tokens.len().min(16));
});
