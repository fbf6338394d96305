#![no_main]

use libfuzzer_sys::fuzz_target;
use report_core::model::Checkpoint;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ckpt) = Checkpoint::from_json(text) {
        let again = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap();
        assert_eq!(again.model.params.tensors().len(), ckpt.model.params.tensors().len());
    }
});
