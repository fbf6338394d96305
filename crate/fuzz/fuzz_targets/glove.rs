#![no_main]

use libfuzzer_sys::fuzz_target;
use report_core::encoders::{build_vocab, parse_embeddings};

fuzz_target!(|data: &[u8]| {
    let words = ["the", "rumor", "fake", "news", "is"];
    let vocab = build_vocab([&words[..]], 1);
    if let Ok(table) = parse_embeddings(data, &vocab, 3) {
        assert_eq!(table.matrix.shape(), (vocab.len(), 3));
        assert!(table.matrix.row(0).iter().all(|&v| v == 0.0));
        assert!(table.matrix.is_finite());
    }
});
