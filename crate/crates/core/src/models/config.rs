//! JSON model descriptions and initial-law specifications.

use serde::{Deserialize, Serialize};

use super::bdc::{build_bdc, build_bdnu, BdcParams, BdnuParams};
use super::diffusion::{discretize, DiffusionSpec, DiscretizeOptions};
use crate::eigen::EigenPair;
use crate::error::{QsdError, Result};
use crate::generator::{GeneratorDoc, SubMarkovGenerator};
use crate::vector::ProbabilityVector;

/// A diffusion model together with the grid used when a finite chain is needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionModel {
    pub spec: DiffusionSpec,
    #[serde(default)]
    pub grid: Option<DiscretizeOptions>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    Generator(GeneratorDoc),
    Bdc(BdcParams),
    Bdnu(BdnuParams),
    Diffusion(DiffusionModel),
}

impl ModelConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelConfig::Generator(d) => SubMarkovGenerator::from_doc(d).map(drop),
            ModelConfig::Bdc(p) => p.validate(),
            ModelConfig::Bdnu(p) => p.validate(),
            ModelConfig::Diffusion(m) => m.spec.validate(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ModelConfig::Generator(_) => "generator",
            ModelConfig::Bdc(_) => "bdc",
            ModelConfig::Bdnu(_) => "bdnu",
            ModelConfig::Diffusion(_) => "diffusion",
        }
    }

    /// The finite sub-Markovian chain of the model; diffusions need a grid.
    pub fn generator(&self) -> Result<SubMarkovGenerator> {
        match self {
            ModelConfig::Generator(d) => SubMarkovGenerator::from_doc(d),
            ModelConfig::Bdc(p) => build_bdc(p),
            ModelConfig::Bdnu(p) => build_bdnu(p),
            ModelConfig::Diffusion(m) => {
                let grid = m.grid.as_ref().ok_or_else(|| {
                    QsdError::config("grid", "a diffusion needs a grid to become a finite chain")
                })?;
                Ok(discretize(&m.spec, grid)?.generator)
            }
        }
    }
}

/// Initial law: `delta:k` (1-based state), `uniform`, `alpha` (the
/// quasi-stationary law) or explicit weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuSpec {
    Delta(usize),
    Uniform,
    Alpha,
    Weights(Vec<f64>),
}

impl MuSpec {
    /// Parses the command-line forms; anything else is read as a JSON array.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(k) = t.strip_prefix("delta:") {
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| QsdError::config("mu", format!("bad state in `{t}`")))?;
            if k == 0 {
                return Err(QsdError::config("mu", "states are numbered from 1"));
            }
            return Ok(MuSpec::Delta(k));
        }
        match t {
            "uniform" => Ok(MuSpec::Uniform),
            "alpha" => Ok(MuSpec::Alpha),
            _ => {
                let w: Vec<f64> = serde_json::from_str(t).map_err(|e| {
                    QsdError::config(
                        "mu",
                        format!("expected delta:k, uniform, alpha or a JSON array: {e}"),
                    )
                })?;
                ProbabilityVector::normalized(w.clone())?;
                Ok(MuSpec::Weights(w))
            }
        }
    }

    pub fn resolve(&self, states: usize, eigen: Option<&EigenPair>) -> Result<ProbabilityVector> {
        match self {
            MuSpec::Delta(k) => {
                if *k == 0 || *k > states {
                    return Err(QsdError::config(
                        "mu",
                        format!("state {k} outside 1..={states}"),
                    ));
                }
                ProbabilityVector::dirac(states, k - 1)
            }
            MuSpec::Uniform => ProbabilityVector::uniform(states),
            MuSpec::Alpha => eigen
                .map(|e| e.alpha.clone())
                .ok_or_else(|| QsdError::config("mu", "alpha needs the eigen-triple")),
            MuSpec::Weights(w) => {
                if w.len() != states {
                    return Err(QsdError::DimensionMismatch {
                        expected: states,
                        got: w.len(),
                    });
                }
                ProbabilityVector::normalized(w.clone())
            }
        }
    }
}
