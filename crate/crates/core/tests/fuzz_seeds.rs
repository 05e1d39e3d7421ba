//! Replays the checked-in fuzz seeds through the parsers: each seed must be
//! accepted or rejected as labelled, and nothing may panic.

use std::path::{Path, PathBuf};

use qsd_core::assumptions::{AssumptionCertificate, CertificateSet, Exhaustion, VerifyOptions};
use qsd_core::models::{ModelConfig, MuSpec};
use qsd_core::SubMarkovGenerator;

fn corpus(target: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target)
}

fn seed(target: &str, name: &str) -> Vec<u8> {
    let p = corpus(target).join(name);
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

/// Leading byte selects the number of states, as in the fuzz targets.
fn sized(bytes: &[u8], modulus: usize) -> (usize, &str) {
    let (&n, rest) = bytes.split_first().unwrap();
    (1 + n as usize % modulus, text(rest))
}

fn check_all_labelled(target: &str, labels: &[(&str, bool)], parses: impl Fn(&[u8]) -> bool) {
    let mut names: Vec<String> = std::fs::read_dir(corpus(target))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let mut labelled: Vec<String> = labels.iter().map(|l| l.0.to_string()).collect();
    labelled.sort();
    assert_eq!(names, labelled, "every seed of {target} needs a label");
    for (name, ok) in labels {
        assert_eq!(parses(&seed(target, name)), *ok, "{target}/{name}");
    }
}

#[test]
fn generator_seeds() {
    check_all_labelled(
        "generator_json",
        &[
            ("golden", true),
            ("ring", true),
            ("duplicates", true),
            ("diagonal", false),
            ("overflow", false),
            ("short_kill", false),
            ("unknown_field", false),
        ],
        |b| SubMarkovGenerator::from_json_str(text(b)).is_ok(),
    );
    let g = SubMarkovGenerator::from_json_str(text(&seed("generator_json", "duplicates"))).unwrap();
    assert_eq!(g.rate(0, 1), 1.5);
}

#[test]
fn model_config_seeds() {
    check_all_labelled(
        "model_config",
        &[
            ("generator", true),
            ("bdc_linear", true),
            ("bdc_table", true),
            ("bdnu", true),
            ("diffusion", true),
            ("bdnu_huge", false),
            ("typo", false),
        ],
        |b| ModelConfig::from_json_str(text(b)).is_ok_and(|m| m.generator().is_ok()),
    );
    let m = ModelConfig::from_json_str(text(&seed("model_config", "diffusion"))).unwrap();
    assert_eq!(m.generator().unwrap().len(), 9 * 12);
}

#[test]
fn exhaustion_seeds() {
    check_all_labelled(
        "exhaustion",
        &[
            ("golden_sets", true),
            ("prefixes", true),
            ("not_strict", false),
            ("not_nested", false),
            ("core_outside", false),
            ("unknown_field", false),
        ],
        |b| {
            let (states, t) = sized(b, 64);
            Exhaustion::from_json_str(t, states).is_ok()
        },
    );
    let bytes = seed("exhaustion", "prefixes");
    let (states, t) = sized(&bytes, 64);
    let e = Exhaustion::from_json_str(t, states).unwrap();
    assert_eq!(e.coupling_domain(), &[0, 1]);
    assert_eq!(e.transitory(), vec![2, 3]);
}

#[test]
fn certificate_seeds() {
    check_all_labelled(
        "certificates",
        &[
            ("mix", true),
            ("sv", true),
            ("et_no_transitory", true),
            ("fails", true),
            ("bad_kind", false),
            ("golden_set", false),
        ],
        |b| AssumptionCertificate::from_json_str(text(b)).is_ok(),
    );
    let set = CertificateSet::from_json_str(text(&seed("certificates", "golden_set"))).unwrap();
    assert!(set.all_hold());
    let failing =
        AssumptionCertificate::from_json_str(text(&seed("certificates", "fails"))).unwrap();
    assert!(!failing.holds());
}

#[test]
fn verify_option_seeds() {
    check_all_labelled(
        "verify_options",
        &[
            ("defaults", true),
            ("custom", true),
            ("sparse", true),
            ("unknown_field", false),
            ("out_of_range", false),
        ],
        |b| serde_json::from_str::<VerifyOptions>(text(b)).is_ok(),
    );
    let o: VerifyOptions = serde_json::from_str(text(&seed("verify_options", "defaults"))).unwrap();
    assert_eq!(o, VerifyOptions::default());
}

#[test]
fn mu_spec_seeds() {
    check_all_labelled(
        "mu_spec",
        &[
            ("delta", true),
            ("uniform", true),
            ("weights", true),
            // Needs the eigen-triple, which the resolver is not given here.
            ("alpha", false),
            ("delta_zero", false),
            ("delta_outside", false),
            ("negative", false),
            ("overflow", false),
        ],
        |b| {
            let (states, t) = sized(b, 32);
            MuSpec::parse(t)
                .and_then(|m| m.resolve(states, None))
                .is_ok()
        },
    );
}
