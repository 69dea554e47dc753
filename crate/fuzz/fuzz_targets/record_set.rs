#![no_main]

use libfuzzer_sys::fuzz_target;
use msdeeponet::excitation::parse_record_set;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(set) = parse_record_set(text) {
        for entry in &set.records {
            assert!(!entry.file.contains('/') && entry.file != "..");
        }
    }
});
