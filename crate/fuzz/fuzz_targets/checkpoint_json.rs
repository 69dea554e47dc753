#![no_main]

use libfuzzer_sys::fuzz_target;
use msdeeponet::deeponet::OperatorModel;
use msdeeponet::neural::{from_json, to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(model) = from_json::<OperatorModel>(text) {
        let back: OperatorModel = from_json(&to_json(&model).unwrap()).expect("valid checkpoints round-trip");
        assert_eq!(back, model);
        if model.sensors() <= 64 {
            let u = vec![0.5; model.sensors()];
            let _ = model.predict_one(&u, &[0.0, 0.5, 1.0]);
        }
    }
});
