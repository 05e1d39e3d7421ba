use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};

/// Slack allowed on the total mass of a (sub-)probability vector.
pub const MASS_TOL: f64 = 1e-9;

/// Nonnegative weights over the states with total mass in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbabilityVector {
    weights: Vec<f64>,
    mass: f64,
}

impl ProbabilityVector {
    /// A sub-probability vector: entries `>= 0` and mass `<= 1 + MASS_TOL`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(QsdError::EmptyDomain);
        }
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(QsdError::invalid(format!(
                    "weight {i} must be finite and >= 0, got {w}"
                )));
            }
        }
        let mass = weights.iter().sum::<f64>();
        if mass > 1.0 + MASS_TOL {
            return Err(QsdError::invalid(format!("mass {mass} exceeds 1")));
        }
        Ok(Self { weights, mass })
    }

    /// A probability vector: mass must equal `1 ± MASS_TOL`.
    pub fn strict(weights: Vec<f64>) -> Result<Self> {
        let v = Self::new(weights)?;
        if (v.mass - 1.0).abs() > MASS_TOL {
            return Err(QsdError::invalid(format!(
                "probability vector has mass {}",
                v.mass
            )));
        }
        Ok(v)
    }

    /// Rescales nonnegative weights to unit mass.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(QsdError::ExtinctMass { mass: total });
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn dirac(states: usize, at: usize) -> Result<Self> {
        if at >= states {
            return Err(QsdError::invalid(format!(
                "state {at} outside {states} states"
            )));
        }
        let mut w = vec![0.0; states];
        w[at] = 1.0;
        Self::new(w)
    }

    pub fn uniform(states: usize) -> Result<Self> {
        if states == 0 {
            return Err(QsdError::EmptyDomain);
        }
        Self::new(vec![1.0 / states as f64; states])
    }

    /// Builds a vector from entries assumed valid, clamping tiny negative
    /// round-off to zero.
    pub(crate) fn from_computed(mut weights: Vec<f64>) -> Self {
        for w in weights.iter_mut() {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let mass = weights.iter().sum();
        Self { weights, mass }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn is_strict(&self) -> bool {
        (self.mass - 1.0).abs() <= MASS_TOL
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    /// `μ(D)` for a set of state indices.
    pub fn mass_on(&self, set: &[usize]) -> f64 {
        set.iter().map(|&i| self.weights[i]).sum()
    }

    /// `⟨μ|f⟩`.
    pub fn dot(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(a, b)| a * b).sum()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }
}

impl TryFrom<Vec<f64>> for ProbabilityVector {
    type Error = QsdError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbabilityVector> for Vec<f64> {
    fn from(v: ProbabilityVector) -> Self {
        v.weights
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

/// `sup_A |μ(A) − ν(A)|`. For vectors of equal mass this is `½ Σ|μ_i − ν_i|`.
pub fn tv_distance(mu: &ProbabilityVector, nu: &ProbabilityVector) -> Result<f64> {
    if mu.len() != nu.len() {
        return Err(QsdError::DimensionMismatch {
            expected: mu.len(),
            got: nu.len(),
        });
    }
    Ok(tv_slices(mu.weights(), nu.weights()))
}

pub(crate) fn tv_slices(a: &[f64], b: &[f64]) -> f64 {
    let (mut pos, mut neg) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        if d > 0.0 {
            pos += d;
        } else {
            neg -= d;
        }
    }
    f64::max(pos, neg)
}
