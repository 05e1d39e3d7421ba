#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_core::assumptions::{AssumptionCertificate, CertificateSet};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(c) = AssumptionCertificate::from_json_str(text) {
        let _ = (c.kind(), c.holds());
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(AssumptionCertificate::from_json_str(&json).unwrap(), c);
    }
    if let Ok(set) = CertificateSet::from_json_str(text) {
        let _ = set.all_hold();
        assert_eq!(set.iter().count(), 5);
    }
});
