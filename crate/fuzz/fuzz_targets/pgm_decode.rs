#![no_main]

use libfuzzer_sys::fuzz_target;
use moldkit::pgm;

fuzz_target!(|data: &[u8]| {
    if let Ok(raw) = pgm::decode_raw(data) {
        assert_eq!(raw.samples.len(), raw.width * raw.height);
        assert!(raw.samples.iter().all(|&s| s <= raw.maxval));
    }
    // Whatever decodes must survive a re-encode unchanged.
    if let Ok(img) = pgm::decode(data) {
        let again = pgm::decode(&pgm::encode(&img)).expect("re-encoded image decodes");
        assert_eq!(again, img);
    }
});
