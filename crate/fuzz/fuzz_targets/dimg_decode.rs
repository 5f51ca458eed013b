#![no_main]

use libfuzzer_sys::fuzz_target;
use moldkit::dimg;

fuzz_target!(|data: &[u8]| {
    let Ok(batch) = dimg::decode(data) else {
        return;
    };
    // Compared as bytes: NaN payloads must round-trip bit for bit.
    let bytes = dimg::encode(&batch).expect("decoded batch encodes");
    assert_eq!(bytes, data);
});
