//! All five certificates in one pass, and the coupling constants when they hold.

use serde::{Deserialize, Serialize};

use super::{
    check_dc, check_et, check_mix, check_sv, derive_coupling_constants, lj_certificate,
    AlphaChoice, AssumptionCertificate, CertificateSet, ConstantsOptions, DerivedConstants,
    Exhaustion, Verdict, Witness,
};
use crate::eigen::{killed_perron_rate, DEFAULT_MAX_ITER};
use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::grid::log_grid;
use crate::semigroup::DEFAULT_TOL;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyOptions {
    /// Time at which the mixing minorant is sought.
    #[serde(default = "default_t_mix")]
    pub t_mix: f64,
    /// Escape rate for the exponential moment; by default halfway between
    /// the survival rate and the certified escape rate.
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_per_decade")]
    pub per_decade: usize,
    #[serde(default)]
    pub constants: ConstantsOptions,
}

fn default_t_mix() -> f64 {
    1.0
}
fn default_t_min() -> f64 {
    0.01
}
fn default_t_max() -> f64 {
    50.0
}
fn default_per_decade() -> usize {
    16
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            t_mix: default_t_mix(),
            rho: None,
            t_min: default_t_min(),
            t_max: default_t_max(),
            per_decade: default_per_decade(),
            constants: ConstantsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyReport {
    pub certificates: CertificateSet,
    pub constants: Option<DerivedConstants>,
    /// Why the constants could not be derived, when they could not.
    pub refutation: Option<String>,
}

impl VerifyReport {
    pub fn refuted(&self) -> bool {
        self.constants.is_none()
    }
}

fn dc_without_mix(t_grid: &[f64]) -> AssumptionCertificate {
    AssumptionCertificate {
        witness: Witness::Dc {
            t_grid: t_grid.to_vec(),
            c_grid: f64::INFINITY,
            c_limit: f64::INFINITY,
            c_raw: f64::INFINITY,
            c: f64::INFINITY,
        },
        verdict: Verdict::Fails {
            state: None,
            reason: "no minorizing measure to compare survival against".into(),
        },
        alpha_c: None,
    }
}

pub fn certify(
    gen: &SubMarkovGenerator,
    exh: &Exhaustion,
    opts: &VerifyOptions,
) -> Result<CertificateSet> {
    exh.validate(gen.len())?;
    let grid = log_grid(opts.t_min, opts.t_max, opts.per_decade)?;
    let mix = check_mix(gen, exh, exh.c, opts.t_mix, &AlphaChoice::Auto)?;
    let dc = match &mix.alpha_c {
        Some(alpha) => check_dc(gen, exh, alpha, opts.t_min, &grid)?,
        None => dc_without_mix(&grid),
    };
    let sv = check_sv(gen, exh, &grid)?;
    let rho = match opts.rho {
        Some(r) => r,
        None => {
            let Witness::Sv { rho_sv, .. } = sv.witness else {
                unreachable!("check_sv returns a survival witness")
            };
            let t = exh.transitory();
            if t.is_empty() {
                2.0 * rho_sv + 1.0
            } else {
                let escape = killed_perron_rate(&gen.restrict(&t)?, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
                if 0.99 * escape > rho_sv {
                    0.5 * (rho_sv + 0.99 * escape)
                } else {
                    0.5 * escape
                }
            }
        }
    };
    let et = check_et(gen, exh, rho)?;
    Ok(CertificateSet {
        lj: lj_certificate(),
        mix,
        dc,
        et,
        sv,
    })
}

/// Certificates plus derived constants. A failing certificate or an
/// inconsistent rate ordering is reported as a refutation, not an error.
pub fn verify(
    gen: &SubMarkovGenerator,
    exh: &Exhaustion,
    opts: &VerifyOptions,
) -> Result<VerifyReport> {
    let certificates = certify(gen, exh, opts)?;
    match derive_coupling_constants(gen, exh, &certificates, &opts.constants) {
        Ok(c) => Ok(VerifyReport {
            certificates,
            constants: Some(c),
            refutation: None,
        }),
        Err(QsdError::AssumptionViolated(msg)) => Ok(VerifyReport {
            certificates,
            constants: None,
            refutation: Some(msg),
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_verifies() {
        let g = SubMarkovGenerator::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)], vec![1.0, 0.0])
            .unwrap();
        let exh = Exhaustion::prefixes(&[1, 2], 0, 0, 1, 2).unwrap();
        let rep = verify(&g, &exh, &VerifyOptions::default()).unwrap();
        assert!(rep.certificates.all_hold(), "{:?}", rep.certificates);
        assert!(!rep.refuted(), "{:?}", rep.refutation);
    }

    #[test]
    fn slow_escape_is_a_refutation() {
        let g = SubMarkovGenerator::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)], vec![1.0, 0.0])
            .unwrap();
        let exh = Exhaustion::prefixes(&[2], 0, 0, 0, 2).unwrap();
        let opts = VerifyOptions {
            rho: Some(0.1),
            ..VerifyOptions::default()
        };
        let rep = verify(&g, &exh, &opts).unwrap();
        assert!(rep.refuted());
    }
}
