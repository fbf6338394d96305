#![no_main]

use libfuzzer_sys::fuzz_target;
use report_core::data::{parse_users, write_users};

fuzz_target!(|data: &[u8]| {
    if let Ok(users) = parse_users(data) {
        let mut buf = Vec::new();
        write_users(&mut buf, &users).unwrap();
        assert_eq!(parse_users(buf.as_slice()).unwrap(), users);
    }
});
