#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_core::assumptions::Exhaustion;

// First byte picks the size of the state set, the rest is the document.
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let states = 1 + n as usize % 64;
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let Ok(e) = Exhaustion::from_json_str(text, states) else { return };
    assert!(e.validate(states).is_ok());
    assert_eq!(e.set(e.len() - 1).len(), states);
    for k in 1..e.len() {
        assert!(e.set(k - 1).iter().all(|x| e.set(k).contains(x)));
    }
    assert!(e.survival_core().len() <= e.mixing_enclosure().len());
    assert!(e.transitory().len() + e.coupling_domain().len() == states);
    let json = serde_json::to_string(&e).unwrap();
    assert_eq!(Exhaustion::from_json_str(&json, states).unwrap(), e);
});
