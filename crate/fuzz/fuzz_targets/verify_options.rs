#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_core::assumptions::VerifyOptions;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(o) = serde_json::from_str::<VerifyOptions>(text) else { return };
    let json = serde_json::to_string(&o).unwrap();
    let again: VerifyOptions = serde_json::from_str(&json).unwrap();
    // NaN never equals itself; compare the serialized forms instead.
    assert_eq!(serde_json::to_string(&again).unwrap(), json);
});
