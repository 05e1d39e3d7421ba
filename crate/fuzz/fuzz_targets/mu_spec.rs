#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_core::models::MuSpec;

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let states = 1 + n as usize % 32;
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let Ok(spec) = MuSpec::parse(text) else { return };
    if let Ok(mu) = spec.resolve(states, None) {
        assert_eq!(mu.len(), states);
        assert!((mu.mass() - 1.0).abs() < 1e-9);
    }
});
