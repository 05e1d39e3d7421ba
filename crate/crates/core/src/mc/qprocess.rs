//! The process conditioned never to be absorbed: the η-transform of the
//! killed chain, with rates `q(i, j)·η(j)/η(i)` off the diagonal and no killing.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::gillespie::{gillespie, JumpPath, JumpSampler};
use super::rng::PathRng;
use crate::eigen::EigenPair;
use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::semigroup::Uniformizer;
use crate::vector::ProbabilityVector;

#[derive(Debug, Clone)]
pub struct QProcess {
    pub generator: SubMarkovGenerator,
    pub lambda0: f64,
    pub eta: Vec<f64>,
    /// `max_i |q(i,i) + λ₀ + Σ_{j≠i} q(i,j)η(j)/η(i)|`: how far the exact
    /// transform is from conservative given the computed eigenpair. The
    /// stored generator drops this defect and is conservative by construction.
    pub row_residual: f64,
}

impl QProcess {
    pub fn new(gen: &SubMarkovGenerator, pair: &EigenPair) -> Result<Self> {
        gen.check_dim(pair.eta.len())?;
        if pair.eta.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(QsdError::invalid("the survival capacity must be positive"));
        }
        let (lambda0, eta) = match polish(gen, pair) {
            Some((l, e))
                if transform_defect(gen, l, &e)
                    < transform_defect(gen, pair.lambda0, &pair.eta) =>
            {
                (l, e)
            }
            _ => (pair.lambda0, pair.eta.clone()),
        };
        let eta = &eta;
        let mut rates = Vec::with_capacity(gen.nnz());
        let mut row_residual: f64 = 0.0;
        for i in 0..gen.len() {
            let mut sum = gen.diag(i) + lambda0;
            for (j, q) in gen.row(i) {
                let r = q * eta[j] / eta[i];
                sum += r;
                rates.push((i, j, r));
            }
            row_residual = row_residual.max(sum.abs());
        }
        let generator = SubMarkovGenerator::from_triplets(gen.len(), &rates, vec![0.0; gen.len()])?;
        Ok(Self {
            generator,
            lambda0,
            eta: eta.clone(),
            row_residual,
        })
    }

    /// Row sums of the stored generator; zero by construction.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.generator.len())
            .map(|i| self.generator.diag(i) + self.generator.row(i).map(|(_, q)| q).sum::<f64>())
            .collect()
    }

    /// `η_* μ`: `μ` reweighted by `η` and normalized.
    pub fn eta_weighted(&self, mu: &ProbabilityVector) -> Result<ProbabilityVector> {
        self.generator.check_dim(mu.len())?;
        ProbabilityVector::normalized(
            mu.weights()
                .iter()
                .zip(&self.eta)
                .map(|(m, e)| m * e)
                .collect(),
        )
    }

    /// Transition kernel rows from the transformed generator.
    pub fn kernel(&self, t: f64, tol: f64) -> Result<Vec<Vec<f64>>> {
        kernel_rows(&self.generator, t, tol)
    }

    /// Largest entrywise gap between the transformed kernel and
    /// `e^{λ₀t}·diag(1/η)·P_t·diag(η)` built from the original chain.
    pub fn kernel_identity_error(&self, gen: &SubMarkovGenerator, t: f64, tol: f64) -> Result<f64> {
        let direct = self.kernel(t, tol)?;
        let u = Uniformizer::new(gen);
        let mut err: f64 = 0.0;
        for (i, row) in direct.iter().enumerate() {
            let s = u.evolve_left(&unit(gen.len(), i), t, tol)?;
            let scale = (self.lambda0 * t + s.log_scale).exp();
            for (j, q) in row.iter().enumerate() {
                let via = scale * s.vector[j] * self.eta[j] / self.eta[i];
                err = err.max((via - q).abs());
            }
        }
        Ok(err)
    }

    /// `‖η_*(μP_t) − (η_*μ)Q_t‖₁`.
    pub fn eta_transform_error(
        &self,
        gen: &SubMarkovGenerator,
        mu: &ProbabilityVector,
        t: f64,
        tol: f64,
    ) -> Result<f64> {
        let killed = Uniformizer::new(gen).apply(mu, t, tol)?;
        let lhs = self.eta_weighted(&killed)?;
        let rhs = Uniformizer::new(&self.generator).apply(&self.eta_weighted(mu)?, t, tol)?;
        Ok(lhs
            .weights()
            .iter()
            .zip(rhs.weights())
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    /// One path of the transformed chain from `x0` over `[0, t_max]`.
    pub fn simulate(&self, x0: usize, t_max: f64, rng: &mut PathRng) -> Result<JumpPath> {
        gillespie(&self.generator, x0, t_max, rng)
    }

    /// Time-weighted occupation law over `steps` jumps from `x0`.
    pub fn occupation(
        &self,
        x0: usize,
        steps: usize,
        rng: &mut PathRng,
    ) -> Result<ProbabilityVector> {
        let n = self.generator.len();
        if x0 >= n {
            return Err(QsdError::invalid(format!("state {x0} outside 0..{n}")));
        }
        let sampler = JumpSampler::new(&self.generator);
        let mut time = vec![0.0; n];
        let mut x = x0;
        for _ in 0..steps {
            let rate = sampler.total_rate(x);
            if rate <= 0.0 {
                // A trap: all remaining time is spent here.
                time[x] += 1.0;
                break;
            }
            time[x] += rng.sample::<f64, _>(Exp1) / rate;
            x = sampler
                .jump(x, rng)
                .expect("the transformed chain has no killing");
        }
        ProbabilityVector::normalized(time)
    }
}

/// Gauss–Seidel sweeps per refinement round, and rounds.
const POLISH_SWEEPS: usize = 2000;
const POLISH_ROUNDS: usize = 4;

fn transform_defect(gen: &SubMarkovGenerator, lambda0: f64, eta: &[f64]) -> f64 {
    (0..gen.len())
        .map(|i| {
            (gen.diag(i) + lambda0 + gen.row(i).map(|(j, q)| q * eta[j] / eta[i]).sum::<f64>())
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Refines `(λ₀, η)` so that each component of η is accurate relative to
/// itself, which the transformed rates `q(i,j)η(j)/η(i)` need. The power
/// iteration only pins η down in absolute terms, useless where η spans many
/// orders of magnitude. Each round runs Gauss–Seidel sweeps on
/// `η(i) = Σ_j q(i,j)η(j) / (−q(i,i) − λ₀)` (positive combinations, so tiny
/// components converge relatively), then moves λ₀ by the β-weighted mean
/// of the remaining row defects.
fn polish(gen: &SubMarkovGenerator, pair: &EigenPair) -> Option<(f64, Vec<f64>)> {
    let mut eta = pair.eta.clone();
    let mut lambda0 = pair.lambda0;
    let alpha = pair.alpha.weights();
    for _ in 0..POLISH_ROUNDS {
        for _ in 0..POLISH_SWEEPS {
            let mut change: f64 = 0.0;
            for i in 0..gen.len() {
                let d = -gen.diag(i) - lambda0;
                let s: f64 = gen.row(i).map(|(j, q)| q * eta[j]).sum();
                if !(d > 0.0 && s > 0.0) {
                    return None;
                }
                let next = s / d;
                change = change.max((next / eta[i] - 1.0).abs());
                eta[i] = next;
            }
            let norm: f64 = eta.iter().zip(alpha).map(|(e, a)| e * a).sum();
            eta.iter_mut().for_each(|e| *e /= norm);
            if change < 4.0 * f64::EPSILON {
                break;
            }
        }
        let shift: f64 = (0..gen.len())
            .map(|i| {
                let defect = gen.diag(i)
                    + lambda0
                    + gen.row(i).map(|(j, q)| q * eta[j] / eta[i]).sum::<f64>();
                alpha[i] * eta[i] * defect
            })
            .sum();
        if shift.abs() < f64::EPSILON * lambda0.abs().max(1e-300) {
            break;
        }
        lambda0 -= shift;
    }
    Some((lambda0, eta))
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn kernel_rows(gen: &SubMarkovGenerator, t: f64, tol: f64) -> Result<Vec<Vec<f64>>> {
    let u = Uniformizer::new(gen);
    (0..gen.len())
        .map(|i| Ok(u.evolve_left(&unit(gen.len(), i), t, tol)?.unscaled()))
        .collect()
}

/// Summary of the transformed-chain checks against an eigenpair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QProcessReport {
    pub row_residual: f64,
    pub max_row_sum: f64,
    pub kernel_error: f64,
    pub eta_transform_error: f64,
    pub beta: ProbabilityVector,
    pub occupation: Option<ProbabilityVector>,
    pub occupation_tv: Option<f64>,
}

pub fn qprocess_simulate(
    gen: &SubMarkovGenerator,
    pair: &EigenPair,
    x0: usize,
    t_max: f64,
    rng: &mut PathRng,
) -> Result<JumpPath> {
    QProcess::new(gen, pair)?.simulate(x0, t_max, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve_eigentriple;
    use crate::mc::rng::stream;
    use crate::vector::tv_distance;

    fn golden() -> SubMarkovGenerator {
        SubMarkovGenerator::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)], vec![1.0, 0.0]).unwrap()
    }

    fn ring() -> SubMarkovGenerator {
        SubMarkovGenerator::from_triplets(
            4,
            &[
                (0, 1, 1.0),
                (1, 2, 2.0),
                (2, 3, 0.5),
                (3, 0, 1.5),
                (1, 0, 0.3),
                (3, 2, 0.7),
            ],
            vec![0.2, 0.0, 1.1, 0.4],
        )
        .unwrap()
    }

    #[test]
    fn constant_kill_only_drops_killing() {
        let g = SubMarkovGenerator::from_triplets(
            3,
            &[(0, 1, 1.0), (1, 2, 2.0), (2, 0, 0.5)],
            vec![0.7; 3],
        )
        .unwrap();
        let pair = solve_eigentriple(&g, 1e-13, 1_000_000).unwrap();
        assert!((pair.lambda0 - 0.7).abs() < 1e-10);
        let q = QProcess::new(&g, &pair).unwrap();
        for (i, j, r) in [(0, 1, 1.0), (1, 2, 2.0), (2, 0, 0.5)] {
            assert!((q.generator.rate(i, j) - r).abs() < 1e-9);
        }
    }

    #[test]
    fn transform_is_conservative() {
        for g in [golden(), ring()] {
            let pair = solve_eigentriple(&g, 1e-13, 1_000_000).unwrap();
            let q = QProcess::new(&g, &pair).unwrap();
            assert!(q.row_sums().iter().all(|&s| s.abs() < 1e-12));
            assert!(q.row_residual < 1e-9, "{}", q.row_residual);
        }
    }

    #[test]
    fn kernel_identity_and_eta_transform() {
        for g in [golden(), ring()] {
            let pair = solve_eigentriple(&g, 1e-13, 1_000_000).unwrap();
            let q = QProcess::new(&g, &pair).unwrap();
            for t in [0.1, 1.0, 5.0] {
                assert!(q.kernel_identity_error(&g, t, 1e-14).unwrap() < 1e-9);
                let mu = ProbabilityVector::dirac(g.len(), 0).unwrap();
                assert!(q.eta_transform_error(&g, &mu, t, 1e-14).unwrap() < 1e-9);
            }
        }
    }

    #[test]
    fn occupation_approaches_beta() {
        let g = golden();
        let pair = solve_eigentriple(&g, 1e-13, 1_000_000).unwrap();
        let q = QProcess::new(&g, &pair).unwrap();
        let occ = q.occupation(0, 200_000, &mut stream(6, 0)).unwrap();
        assert!(tv_distance(&occ, &pair.beta()).unwrap() < 0.02);
        assert!((pair.beta()[0] - 0.276_393_2).abs() < 1e-6);
    }

    #[test]
    fn rejects_nonpositive_eta() {
        let g = golden();
        let mut pair = solve_eigentriple(&g, 1e-13, 1_000_000).unwrap();
        pair.eta[1] = 0.0;
        assert!(QProcess::new(&g, &pair).is_err());
    }
}
