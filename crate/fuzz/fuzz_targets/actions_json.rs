#![no_main]

use libfuzzer_sys::fuzz_target;
use moldkit::roi::{actions_to_json, parse_actions};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(specs) = parse_actions(s) else {
        return;
    };
    let back = parse_actions(&actions_to_json(&specs)).expect("own output parses");
    assert_eq!(back, specs);
    for spec in &specs {
        let _ = spec.half_extents().expect("validated");
        for j in 0..spec.positions.len() {
            let _ = spec.effect_box(j).expect("validated");
        }
    }
});
