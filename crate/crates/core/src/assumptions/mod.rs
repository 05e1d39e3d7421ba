//! Finite-state verification of the mixing, coupling-domain, escape and
//! survival hypotheses, and the constants they feed into the coupling.

mod checks;
mod constants;
mod pipeline;
mod retention;

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::vector::ProbabilityVector;

pub use checks::{
    check_dc, check_et, check_mix, check_sv, escape_moment_exact, lj_certificate,
    mix_extension_bound, reverify, sv_from_regeneration, AlphaChoice,
};
pub use constants::{derive_coupling_constants, renewal_floor, ConstantsOptions, DerivedConstants};
pub use pipeline::{certify, verify, VerifyOptions, VerifyReport};
pub use retention::{retention_infimum, verify_mass_retention, RetentionReport, RetentionRow};

/// Upper constants are multiplied by this, lower ones divided by it.
pub const PADDING: f64 = 1.05;

/// Increasing chain `D_0 ⊂ D_1 ⊂ … ⊂ D_{K-1}` of state sets ending in the
/// full state set, with the indices of the survival core `s`, the coupling
/// domain `c` and the mixing enclosure `m`. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exhaustion {
    pub sets: Vec<Vec<usize>>,
    pub s: usize,
    pub c: usize,
    pub m: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExhaustionDoc {
    Sets(Exhaustion),
    Prefixes(PrefixDoc),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PrefixDoc {
    prefixes: Vec<usize>,
    s: usize,
    c: usize,
    m: usize,
}

impl Exhaustion {
    pub fn new(sets: Vec<Vec<usize>>, s: usize, c: usize, m: usize, states: usize) -> Result<Self> {
        let e = Self { sets, s, c, m };
        e.validate(states)?;
        Ok(e)
    }

    /// `D_k = {0, …, sizes[k] - 1}`.
    pub fn prefixes(sizes: &[usize], s: usize, c: usize, m: usize, states: usize) -> Result<Self> {
        Self::new(
            sizes.iter().map(|&n| (0..n).collect()).collect(),
            s,
            c,
            m,
            states,
        )
    }

    /// Accepts either explicit `sets` or `prefixes` (set sizes, see
    /// [`Exhaustion::prefixes`]).
    pub fn from_json_str(text: &str, states: usize) -> Result<Self> {
        match serde_json::from_str(text)? {
            ExhaustionDoc::Sets(e) => {
                e.validate(states)?;
                Ok(e)
            }
            ExhaustionDoc::Prefixes(p) => Self::prefixes(&p.prefixes, p.s, p.c, p.m, states),
        }
    }

    pub fn validate(&self, states: usize) -> Result<()> {
        if self.sets.is_empty() {
            return Err(QsdError::config("sets", "at least one set is required"));
        }
        let mut prev = vec![false; states];
        let mut prev_len = 0;
        for (k, set) in self.sets.iter().enumerate() {
            if set.is_empty() {
                return Err(QsdError::config(format!("sets[{k}]"), "empty set"));
            }
            let mut cur = vec![false; states];
            for (i, &x) in set.iter().enumerate() {
                if x >= states {
                    return Err(QsdError::config(
                        format!("sets[{k}][{i}]"),
                        format!("state {x} outside {states} states"),
                    ));
                }
                if cur[x] {
                    return Err(QsdError::config(
                        format!("sets[{k}][{i}]"),
                        format!("state {x} repeated"),
                    ));
                }
                cur[x] = true;
            }
            if k > 0 {
                if let Some(x) = (0..states).find(|&x| prev[x] && !cur[x]) {
                    return Err(QsdError::config(
                        format!("sets[{k}]"),
                        format!("does not contain state {x} of the previous set"),
                    ));
                }
                if set.len() == prev_len {
                    return Err(QsdError::config(
                        format!("sets[{k}]"),
                        "inclusion must be strict",
                    ));
                }
            }
            prev = cur;
            prev_len = set.len();
        }
        if prev_len != states {
            return Err(QsdError::config(
                format!("sets[{}]", self.sets.len() - 1),
                format!("last set has {prev_len} states, expected all {states}"),
            ));
        }
        for (name, idx) in [("s", self.s), ("c", self.c), ("m", self.m)] {
            if idx >= self.sets.len() {
                return Err(QsdError::config(
                    name,
                    format!("index {idx} >= {} sets", self.sets.len()),
                ));
            }
        }
        if self.s > self.m {
            return Err(QsdError::config(
                "s",
                "survival core must lie inside the mixing enclosure",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn set(&self, k: usize) -> &[usize] {
        &self.sets[k]
    }

    pub fn survival_core(&self) -> &[usize] {
        &self.sets[self.s]
    }

    pub fn coupling_domain(&self) -> &[usize] {
        &self.sets[self.c]
    }

    pub fn mixing_enclosure(&self) -> &[usize] {
        &self.sets[self.m]
    }

    /// Complement of the coupling domain.
    pub fn transitory(&self) -> Vec<usize> {
        let states = self.sets.last().map_or(0, Vec::len);
        complement(&self.sets[self.c], states)
    }
}

pub(crate) fn complement(set: &[usize], states: usize) -> Vec<usize> {
    let mut mask = vec![false; states];
    set.iter().for_each(|&x| mask[x] = true);
    (0..states).filter(|&x| !mask[x]).collect()
}

pub(crate) fn indicator(set: &[usize], states: usize) -> Vec<f64> {
    let mut f = vec![0.0; states];
    set.iter().for_each(|&x| f[x] = 1.0);
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AssumptionKind {
    Mix,
    Dc,
    #[serde(rename = "eT")]
    ET,
    Sv,
    LJ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SvRoute {
    /// Killed Perron rate of the mixing enclosure.
    Perron,
    /// `ρ = -ln(c_rg)/t_rg` from a mixing certificate.
    Regeneration,
}

/// Quantifier witnesses of a certificate. `c` fields are padded, `*_raw`
/// fields are the values actually computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Witness {
    Mix {
        n: usize,
        m: usize,
        t: f64,
        c_raw: f64,
        c: f64,
    },
    Dc {
        t_grid: Vec<f64>,
        c_grid: f64,
        c_limit: f64,
        c_raw: f64,
        c: f64,
    },
    #[serde(rename = "eT")]
    ET {
        rho: f64,
        /// `None` when the exponential moment is infinite.
        e_t_raw: Option<f64>,
        e_t: Option<f64>,
        /// Killed Perron rate of the transitory set (`None` if it is empty).
        escape_rate: Option<f64>,
        /// Largest certified escape rate (1% below `escape_rate`).
        rho_et: Option<f64>,
    },
    Sv {
        m: usize,
        route: SvRoute,
        rho_sv: f64,
        t_grid: Vec<f64>,
        c_raw: f64,
        c: f64,
    },
    LJ {
        note: String,
    },
}

impl Witness {
    pub fn kind(&self) -> AssumptionKind {
        match self {
            Witness::Mix { .. } => AssumptionKind::Mix,
            Witness::Dc { .. } => AssumptionKind::Dc,
            Witness::ET { .. } => AssumptionKind::ET,
            Witness::Sv { .. } => AssumptionKind::Sv,
            Witness::LJ { .. } => AssumptionKind::LJ,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails {
        state: Option<usize>,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionCertificate {
    pub witness: Witness,
    #[serde(flatten)]
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_c: Option<ProbabilityVector>,
}

impl AssumptionCertificate {
    pub fn kind(&self) -> AssumptionKind {
        self.witness.kind()
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// The five certificates of one model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateSet {
    pub lj: AssumptionCertificate,
    pub mix: AssumptionCertificate,
    pub dc: AssumptionCertificate,
    pub et: AssumptionCertificate,
    pub sv: AssumptionCertificate,
}

impl CertificateSet {
    pub fn iter(&self) -> impl Iterator<Item = &AssumptionCertificate> {
        [&self.lj, &self.mix, &self.dc, &self.et, &self.sv].into_iter()
    }

    pub fn all_hold(&self) -> bool {
        self.iter().all(AssumptionCertificate::holds)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exhaustion_validation() {
        assert!(Exhaustion::prefixes(&[1, 2, 4], 0, 1, 2, 4).is_ok());
        let err = |r: Result<Exhaustion>| match r {
            Err(QsdError::Config { path, .. }) => path,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(err(Exhaustion::prefixes(&[1, 1, 4], 0, 0, 2, 4)), "sets[1]");
        assert_eq!(err(Exhaustion::prefixes(&[1, 3], 0, 0, 1, 4)), "sets[1]");
        let p = Exhaustion::from_json_str(r#"{"prefixes":[1,4],"s":0,"c":0,"m":1}"#, 4).unwrap();
        assert_eq!(p, Exhaustion::prefixes(&[1, 4], 0, 0, 1, 4).unwrap());
        assert!(Exhaustion::from_json_str(r#"{"prefixes":[1,4],"s":0,"c":0}"#, 4).is_err());
        assert_eq!(err(Exhaustion::prefixes(&[1, 4], 0, 2, 1, 4)), "c");
        assert_eq!(
            err(Exhaustion::new(vec![vec![0], vec![1, 2]], 0, 0, 1, 3)),
            "sets[1]"
        );
        assert_eq!(
            err(Exhaustion::new(vec![vec![0, 7]], 0, 0, 0, 2)),
            "sets[0][1]"
        );
        assert_eq!(err(Exhaustion::prefixes(&[1, 2], 1, 0, 0, 2)), "s");
    }

    #[test]
    fn exhaustion_json() {
        let e = Exhaustion::from_json_str(r#"{"sets": [[1], [0, 1]], "s": 0, "c": 0, "m": 1}"#, 2)
            .unwrap();
        assert_eq!(e.transitory(), vec![0]);
        assert!(
            Exhaustion::from_json_str(r#"{"sets": [[0]], "s": 0, "c": 0, "m": 0, "x": 1}"#, 1)
                .is_err()
        );
    }

    #[test]
    fn certificate_json_round_trip() {
        let c = AssumptionCertificate {
            witness: Witness::ET {
                rho: 0.5,
                e_t_raw: Some(2.0),
                e_t: Some(2.1),
                escape_rate: Some(1.0),
                rho_et: Some(0.99),
            },
            verdict: Verdict::Holds,
            alpha_c: None,
        };
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains(r#""kind":"eT""#) && s.contains(r#""verdict":"holds""#));
        assert_eq!(AssumptionCertificate::from_json_str(&s).unwrap(), c);
        let f = AssumptionCertificate {
            verdict: Verdict::Fails {
                state: Some(3),
                reason: "x".into(),
            },
            ..c
        };
        let back =
            AssumptionCertificate::from_json_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
