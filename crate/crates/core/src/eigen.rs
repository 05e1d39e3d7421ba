//! Perron eigen-triple `(λ₀, α, η)` of an irreducible sub-Markovian generator.
//!
//! Power iteration runs on the lazy kernel `K = I + Q/(2Λ)`. Its diagonal is
//! at least ½, so `K` is aperiodic whenever `Q` is irreducible, and every real
//! eigenvalue `-λ` of `Q` maps to `1 - λ/(2Λ) ∈ [0, 1]`: ordering by modulus in
//! `K` is ordering by decay rate in `Q`.
//!
//! Normalization: `α` sums to one and `⟨α|η⟩ = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::vector::ProbabilityVector;

pub const DEFAULT_EIGEN_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenPair {
    /// Extinction rate `λ₀`.
    pub lambda0: f64,
    /// Quasi-stationary distribution (left eigenvector).
    pub alpha: ProbabilityVector,
    /// Survival capacity (right eigenvector), `⟨α|η⟩ = 1`.
    pub eta: Vec<f64>,
    /// `‖αQ + λ₀α‖₁`.
    pub residual_left: f64,
    /// `‖Qη + λ₀η‖_∞`.
    pub residual_right: f64,
    /// Estimated relative gap `(θ₁ - θ₂)/θ₁` of the lazy kernel, from the
    /// contraction of successive residuals. `None` when the iteration
    /// converged before a ratio could be observed.
    pub gap_estimate: Option<f64>,
    /// Set when the gap estimate is below the solver tolerance.
    pub degenerate: bool,
    pub iterations: usize,
}

impl EigenPair {
    /// Stationary law of the Q-process, `β = η·α`.
    pub fn beta(&self) -> ProbabilityVector {
        let w: Vec<f64> = self
            .alpha
            .weights()
            .iter()
            .zip(&self.eta)
            .map(|(a, e)| a * e)
            .collect();
        ProbabilityVector::from_computed(w)
    }
}

struct Lazy {
    scale: f64,
    diag: Vec<f64>,
}

impl Lazy {
    fn new(gen: &SubMarkovGenerator) -> Self {
        let lambda = gen.uniformization_rate();
        let scale = if lambda > 0.0 { 2.0 * lambda } else { 1.0 };
        let diag = (0..gen.len())
            .map(|i| 1.0 - gen.out_rate(i) / scale)
            .collect();
        Self { scale, diag }
    }

    fn left(&self, gen: &SubMarkovGenerator, v: &[f64], out: &mut [f64]) {
        for ((o, x), d) in out.iter_mut().zip(v).zip(&self.diag) {
            *o = x * d;
        }
        for (i, &vi) in v.iter().enumerate() {
            if vi != 0.0 {
                for (j, q) in gen.row(i) {
                    out[j] += vi * q / self.scale;
                }
            }
        }
    }

    fn right(&self, gen: &SubMarkovGenerator, f: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.diag[i] * f[i];
            for (j, q) in gen.row(i) {
                acc += q * f[j] / self.scale;
            }
            *o = acc;
        }
    }
}

fn left_residual(gen: &SubMarkovGenerator, alpha: &[f64], lambda0: f64, buf: &mut [f64]) -> f64 {
    gen.left_mul(alpha, buf);
    buf.iter()
        .zip(alpha)
        .map(|(q, a)| (q + lambda0 * a).abs())
        .sum()
}

fn right_residual(gen: &SubMarkovGenerator, eta: &[f64], lambda0: f64, buf: &mut [f64]) -> f64 {
    gen.right_mul(eta, buf);
    buf.iter()
        .zip(eta)
        .map(|(q, e)| (q + lambda0 * e).abs())
        .fold(0.0, f64::max)
}

/// Left Perron vector and rate of an irreducible generator.
pub(crate) fn perron_left(
    gen: &SubMarkovGenerator,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, usize, Option<f64>)> {
    let n = gen.len();
    if n == 1 {
        return Ok((gen.out_rate(0), vec![1.0], 0, None));
    }
    let lazy = Lazy::new(gen);
    let thresh = tol * gen.uniformization_rate().max(1.0);
    let mut v = vec![1.0 / n as f64; n];
    let mut next = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut prev_res = f64::NAN;
    let mut ratio = None;
    for it in 1..=max_iter {
        lazy.left(gen, &v, &mut next);
        let theta: f64 = next.iter().sum();
        if !(theta > 0.0) {
            return Err(QsdError::InvalidGenerator(
                "kernel annihilated the iterate".into(),
            ));
        }
        next.iter_mut().for_each(|x| *x /= theta);
        std::mem::swap(&mut v, &mut next);
        // The residual is checked every few steps; it costs one more product.
        if it % 8 == 0 || it < 8 {
            let lambda0 = lazy.scale * (1.0 - theta);
            let res = left_residual(gen, &v, lambda0, &mut buf);
            if prev_res.is_finite() && prev_res > 0.0 && res > 0.0 {
                let step = if it <= 8 { 1.0 } else { 8.0 };
                ratio = Some((res / prev_res).powf(1.0 / step));
            }
            prev_res = res;
            if res <= thresh {
                // Rayleigh-type refinement: the rate that best matches αQ.
                gen.left_mul(&v, &mut buf);
                let lambda0 = -buf.iter().sum::<f64>();
                return Ok((lambda0, v, it, ratio));
            }
        }
    }
    Err(QsdError::NoConvergence {
        iterations: max_iter,
        residual: prev_res,
    })
}

fn perron_right(
    gen: &SubMarkovGenerator,
    tol: f64,
    max_iter: usize,
    lambda0: f64,
) -> Result<Vec<f64>> {
    let n = gen.len();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let lazy = Lazy::new(gen);
    let thresh = tol * gen.uniformization_rate().max(1.0);
    let mut f = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut buf = vec![0.0; n];
    let mut res = f64::NAN;
    for it in 1..=max_iter {
        lazy.right(gen, &f, &mut next);
        let m = next.iter().copied().fold(0.0, f64::max);
        next.iter_mut().for_each(|x| *x /= m);
        std::mem::swap(&mut f, &mut next);
        if it % 8 == 0 || it < 8 {
            res = right_residual(gen, &f, lambda0, &mut buf);
            if res <= thresh {
                return Ok(f);
            }
        }
    }
    Err(QsdError::NoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

/// Extinction rate, QSD and survival capacity of an irreducible generator.
pub fn solve_eigentriple(gen: &SubMarkovGenerator, tol: f64, max_iter: usize) -> Result<EigenPair> {
    if !(tol > 0.0) {
        return Err(QsdError::invalid("tolerance must be > 0"));
    }
    let classes = gen.communicating_classes();
    if classes.len() != 1 {
        return Err(QsdError::NotIrreducible {
            components: classes.len(),
        });
    }
    let (lambda0, alpha, it_left, ratio) = perron_left(gen, tol, max_iter)?;
    let mut eta = perron_right(gen, tol, max_iter, lambda0)?;
    let dot: f64 = alpha.iter().zip(&eta).map(|(a, e)| a * e).sum();
    eta.iter_mut().for_each(|e| *e /= dot);

    let mut buf = vec![0.0; gen.len()];
    let residual_left = left_residual(gen, &alpha, lambda0, &mut buf);
    let residual_right = right_residual(gen, &eta, lambda0, &mut buf);
    let gap_estimate = ratio.map(|r| (1.0 - r).max(0.0));
    let degenerate = gap_estimate.is_some_and(|g| g < tol);
    Ok(EigenPair {
        lambda0,
        alpha: ProbabilityVector::from_computed(alpha),
        eta,
        residual_left,
        residual_right,
        gap_estimate,
        degenerate,
        iterations: it_left,
    })
}

/// Decay rate of the process killed on leaving its own communicating
/// classes: `-s(Q)`, the negated spectral abscissa. Reducible generators are
/// handled class by class.
pub fn killed_perron_rate(gen: &SubMarkovGenerator, tol: f64, max_iter: usize) -> Result<f64> {
    let mut best = f64::INFINITY;
    for class in gen.communicating_classes() {
        let rate = if class.len() == 1 {
            gen.out_rate(class[0])
        } else {
            let sub = gen.restrict(&class)?;
            perron_left(&sub, tol, max_iter)?.0
        };
        best = best.min(rate);
    }
    Ok(best)
}

/// `λ₁ - λ₀`, estimated by power iteration on the lazy kernel deflated by
/// the Perron projector `η ⊗ α`. Exact for real spectra (reversible chains);
/// for complex subdominant eigenvalues it returns a lower bound on the
/// real-part gap.
pub fn spectral_gap(
    gen: &SubMarkovGenerator,
    pair: &EigenPair,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let n = gen.len();
    if n == 1 {
        return Ok(f64::INFINITY);
    }
    let lazy = Lazy::new(gen);
    let project = |v: &mut [f64]| {
        let c: f64 = v.iter().zip(&pair.eta).map(|(a, b)| a * b).sum();
        v.iter_mut()
            .zip(pair.alpha.weights())
            .for_each(|(x, a)| *x -= c * a);
    };
    // Deterministic start with components along every eigendirection.
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 7919 + 13) % 17) as f64 / 17.0 - 0.5 * (i % 2) as f64)
        .collect();
    project(&mut v);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut nv = norm(&v);
    if nv == 0.0 {
        return Err(QsdError::invalid("deflated start vector vanished"));
    }
    v.iter_mut().for_each(|x| *x /= nv);
    let mut next = vec![0.0; n];
    let mut theta2 = f64::NAN;
    for _ in 0..max_iter {
        lazy.left(gen, &v, &mut next);
        project(&mut next);
        nv = norm(&next);
        if nv == 0.0 {
            return Ok(f64::INFINITY);
        }
        // Rayleigh quotient in the plain inner product.
        let rq: f64 = next.iter().zip(&v).map(|(a, b)| a * b).sum();
        next.iter_mut().for_each(|x| *x /= nv);
        std::mem::swap(&mut v, &mut next);
        let est = if rq.abs() > 0.0 { nv.max(rq.abs()) } else { nv };
        if (est - theta2).abs() <= tol {
            let lambda1 = lazy.scale * (1.0 - est);
            return Ok(lambda1 - pair.lambda0);
        }
        theta2 = est;
    }
    Err(QsdError::NoConvergence {
        iterations: max_iter,
        residual: f64::NAN,
    })
}
