#![no_main]

use libfuzzer_sys::fuzz_target;
use report_core::data::{parse_instances, write_instances};

fuzz_target!(|data: &[u8]| {
    // Anything that parses must survive a write/parse round trip unchanged.
    if let Ok(instances) = parse_instances(data) {
        let mut buf = Vec::new();
        write_instances(&mut buf, &instances).unwrap();
        assert_eq!(parse_instances(buf.as_slice()).unwrap(), instances);
    }
});
