#![no_main]

use libfuzzer_sys::fuzz_target;
use qsd_core::models::ModelConfig;

/// Builders allocate the whole chain; keep runs fast.
const BUILD_LIMIT: usize = 4096;

fn small(m: &ModelConfig) -> bool {
    match m {
        ModelConfig::Generator(d) => d.states <= BUILD_LIMIT,
        ModelConfig::Bdc(p) => p.n_max <= BUILD_LIMIT,
        ModelConfig::Bdnu(p) => p.n_max <= BUILD_LIMIT,
        ModelConfig::Diffusion(d) => d.grid.as_ref().is_none_or(|g| g.nx.saturating_mul(g.nn) <= BUILD_LIMIT),
    }
}

fuzz_target!(|data: &[u8]| {
    if data.len() > 1 << 16 {
        return;
    }
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(m) = ModelConfig::from_json_str(text) else { return };
    let json = serde_json::to_string(&m).unwrap();
    assert_eq!(ModelConfig::from_json_str(&json).unwrap(), m);
    if small(&m) {
        if let Ok(g) = m.generator() {
            assert!(g.len() >= 1);
        }
    }
});
