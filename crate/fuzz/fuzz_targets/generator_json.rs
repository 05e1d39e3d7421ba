#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_core::SubMarkovGenerator;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(g) = SubMarkovGenerator::from_json_str(text) else { return };
    // A parsed generator must survive its own document format.
    let doc = serde_json::to_string(&g.to_doc()).unwrap();
    let again = SubMarkovGenerator::from_json_str(&doc).unwrap();
    assert_eq!(again.to_doc(), g.to_doc());
    assert!((0..g.len()).all(|i| g.out_rate(i).is_finite()));
});
