#![no_main]

use libfuzzer_sys::fuzz_target;
use msdeeponet::excitation::{parse_record_csv, record_to_csv};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(record) = parse_record_csv(text, "fuzz") {
        assert!(record.series.len() >= 2);
        assert!(record.series.dt > 0.0);
        let again = parse_record_csv(&record_to_csv(&record), "fuzz").expect("exported records re-import");
        assert_eq!(again.series.values, record.series.values);
    }
});
