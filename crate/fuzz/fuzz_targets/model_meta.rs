#![no_main]

use libfuzzer_sys::fuzz_target;
use moldkit::predict::parse_model_meta;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(meta) = parse_model_meta(s) {
        assert!(meta.w > 0 && meta.h > 0);
        let text = serde_json::to_string(&meta).expect("meta serializes");
        assert_eq!(parse_model_meta(&text).expect("own output parses"), meta);
    }
});
