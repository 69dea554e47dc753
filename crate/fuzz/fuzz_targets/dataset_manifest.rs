#![no_main]

use libfuzzer_sys::fuzz_target;
use msdeeponet::dataset::parse_manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(manifest) = parse_manifest(text) {
        for entry in &manifest.samples {
            assert!(!std::path::Path::new(&entry.file).is_absolute());
        }
    }
});
