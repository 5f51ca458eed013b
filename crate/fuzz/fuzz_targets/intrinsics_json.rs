#![no_main]

use libfuzzer_sys::fuzz_target;
use moldkit::CameraIntrinsics;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(intr) = CameraIntrinsics::from_json_str(s) else {
        return;
    };
    let back = CameraIntrinsics::from_json_str(&intr.to_json_string()).expect("own output parses");
    assert_eq!(back, intr);
    assert!(intr.z_min() < intr.z_max());
});
