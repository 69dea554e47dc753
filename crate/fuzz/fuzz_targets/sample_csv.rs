#![no_main]

use libfuzzer_sys::fuzz_target;
use msdeeponet::dataset::parse_sample_csv;

fuzz_target!(|data: &[u8]| {
    let Some((&first, rest)) = data.split_first() else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let floors = 1 + usize::from(first % 8);
    if let Ok((times, excitation, targets)) = parse_sample_csv(text, floors) {
        assert_eq!(times.len(), excitation.len());
        assert_eq!(targets.dim(), (times.len(), floors));
    }
});
