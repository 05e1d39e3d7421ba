//! Transition semigroup `P_t = e^{tQ}` by uniformization.
//!
//! With `Λ = max_i |q(i, i)|` and the substochastic kernel `K = I + Q/Λ`,
//! `μ P_t = Σ_k e^{-Λt} (Λt)^k / k! · μ K^k`. The Poisson weights are computed
//! from the mode outwards and truncated once both tails fall below the
//! requested tolerance.
//!
//! Long horizons are cut into chunks. After each chunk the vector is rescaled
//! to unit mass and the logarithm of the scale is carried separately, so
//! survival probabilities far below `f64::MIN_POSITIVE` keep full relative
//! accuracy. Inside a chunk the tail tolerance is tightened by the smallest
//! possible mass ratio `e^{-κ_max Δt}`, which bounds the relative (not just
//! absolute) truncation error by `tol` per chunk.

use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::vector::ProbabilityVector;

/// Default Poisson tail tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Masses below this are treated as extinct when conditioning.
pub const UNDERFLOW_MASS: f64 = 1e-300;

/// Largest `Λ Δt` handled in one chunk.
const MAX_CHUNK_RATE: f64 = 4096.0;
/// Entries below this are flushed to zero inside a chunk, far below the
/// accuracy any chunk is asked for.
const FLUSH_BELOW: f64 = 1e-290;
/// Smallest norm ratio accepted across one chunk before it is split.
const MIN_CHUNK_RATIO: f64 = 1e-250;

/// Truncated Poisson(`a`) weights on `left..=left + weights.len() - 1`,
/// normalized to unit sum.
#[derive(Debug, Clone)]
pub struct PoissonWeights {
    pub left: usize,
    pub weights: Vec<f64>,
}

impl PoissonWeights {
    pub fn new(a: f64, tol: f64) -> Self {
        if a <= 0.0 {
            return Self {
                left: 0,
                weights: vec![1.0],
            };
        }
        let mode = a.floor() as usize;
        let half = 0.5 * tol;

        let mut right_w = vec![1.0f64];
        let mut sum = 1.0;
        let mut k = mode;
        loop {
            let w = right_w[right_w.len() - 1] * a / (k + 1) as f64;
            k += 1;
            right_w.push(w);
            sum += w;
            let r = a / (k + 2) as f64;
            if r < 1.0 && w * r / (1.0 - r) <= half * sum {
                break;
            }
        }

        let mut left_w = Vec::new();
        let mut k = mode;
        let mut w = 1.0;
        while k > 0 {
            w *= k as f64 / a;
            k -= 1;
            left_w.push(w);
            sum += w;
            let r = k as f64 / a;
            if r < 1.0 && w * r / (1.0 - r) <= half * sum {
                break;
            }
        }
        let left = k;
        let mut weights: Vec<f64> = left_w.into_iter().rev().collect();
        weights.extend(right_w);
        weights.iter_mut().for_each(|w| *w /= sum);
        Self { left, weights }
    }

    pub fn right(&self) -> usize {
        self.left + self.weights.len() - 1
    }
}

/// A nonnegative vector stored as `vector · exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct Scaled {
    pub vector: Vec<f64>,
    pub log_scale: f64,
}

impl Scaled {
    pub fn unscaled(&self) -> Vec<f64> {
        let s = self.log_scale.exp();
        self.vector.iter().map(|v| v * s).collect()
    }

    pub fn log_mass(&self) -> f64 {
        self.vector.iter().sum::<f64>().ln() + self.log_scale
    }
}

/// Precomputed uniformized kernel `K = I + Q/Λ`.
#[derive(Debug, Clone)]
pub struct Uniformizer {
    lambda: f64,
    diag: Vec<f64>,
    // Off-diagonal part and its transpose, so both sides are gathers.
    rows: SparseRows,
    t_rows: SparseRows,
}

/// Off-diagonal rows, padded to a fixed width when rows are short.
#[derive(Debug, Clone)]
struct SparseRows {
    ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    width: Option<usize>,
    /// Coefficients of `x[i-1]` and `x[i+1]` when rows only touch neighbours.
    band: Option<(Vec<f64>, Vec<f64>)>,
}

/// Rows at most this long are stored padded.
const MAX_PADDED_WIDTH: usize = 4;

impl SparseRows {
    fn new(ptr: Vec<usize>, cols: Vec<u32>, vals: Vec<f64>) -> Self {
        let n = ptr.len() - 1;
        let w = ptr.windows(2).map(|p| p[1] - p[0]).max().unwrap_or(0);
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let banded = (0..n).all(|i| {
            (ptr[i]..ptr[i + 1]).all(|k| match cols[k] as usize {
                j if j + 1 == i => {
                    lower[i] += vals[k];
                    true
                }
                j if j == i + 1 => {
                    upper[i] += vals[k];
                    true
                }
                _ => false,
            })
        });
        let band = banded.then_some((lower, upper));
        if w > MAX_PADDED_WIDTH {
            return Self {
                ptr,
                cols,
                vals,
                width: None,
                band,
            };
        }
        let mut pc = Vec::with_capacity(n * w);
        let mut pv = Vec::with_capacity(n * w);
        for i in 0..n {
            let r = ptr[i]..ptr[i + 1];
            pc.extend_from_slice(&cols[r.clone()]);
            pv.extend_from_slice(&vals[r.clone()]);
            for _ in r.len()..w {
                pc.push(i as u32);
                pv.push(0.0);
            }
        }
        Self {
            ptr,
            cols: pc,
            vals: pv,
            width: Some(w),
            band,
        }
    }

    #[inline]
    fn dot(&self, i: usize, x: &[f64]) -> f64 {
        let r = match self.width {
            Some(w) => i * w..(i + 1) * w,
            None => self.ptr[i]..self.ptr[i + 1],
        };
        self.cols[r.clone()]
            .iter()
            .zip(&self.vals[r])
            .map(|(&j, &q)| q * x[j as usize])
            .sum()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Left,
    Right,
}

impl Uniformizer {
    pub fn new(gen: &SubMarkovGenerator) -> Self {
        let lambda = gen.uniformization_rate();
        let n = gen.len();
        let inv = if lambda > 0.0 { 1.0 / lambda } else { 0.0 };
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(gen.nnz());
        let mut vals = Vec::with_capacity(gen.nnz());
        row_ptr.push(0);
        for i in 0..n {
            for (j, q) in gen.row(i) {
                cols.push(j as u32);
                vals.push(q * inv);
            }
            row_ptr.push(cols.len());
        }
        let mut counts = vec![0usize; n + 1];
        cols.iter().for_each(|&j| counts[j as usize + 1] += 1);
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let t_row_ptr = counts.clone();
        let mut fill = counts;
        let mut t_cols = vec![0u32; cols.len()];
        let mut t_vals = vec![0.0; cols.len()];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = cols[k] as usize;
                t_cols[fill[j]] = i as u32;
                t_vals[fill[j]] = vals[k];
                fill[j] += 1;
            }
        }
        let diag = (0..n)
            .map(|i| {
                if lambda > 0.0 {
                    (1.0 - gen.out_rate(i) * inv).max(0.0)
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            lambda,
            diag,
            rows: SparseRows::new(row_ptr, cols, vals),
            t_rows: SparseRows::new(t_row_ptr, t_cols, t_vals),
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// One kernel step `out = cur·K` (or `K·cur`), fused with `acc += w·cur`.
    fn step(&self, cur: &[f64], out: &mut [f64], acc: &mut [f64], w: f64, side: Side) {
        let rows = match side {
            Side::Left => &self.t_rows,
            Side::Right => &self.rows,
        };
        if let Some((lower, upper)) = &rows.band {
            let n = cur.len();
            let flush = |x: f64| if x < FLUSH_BELOW { 0.0 } else { x };
            acc.iter_mut().zip(cur).for_each(|(a, c)| *a += w * c);
            if n == 1 {
                out[0] = flush(self.diag[0] * cur[0]);
                return;
            }
            out[0] = flush(self.diag[0] * cur[0] + upper[0] * cur[1]);
            out[n - 1] = flush(self.diag[n - 1] * cur[n - 1] + lower[n - 1] * cur[n - 2]);
            for ((((o, c), d), lo), up) in out[1..n - 1]
                .iter_mut()
                .zip(cur.windows(3))
                .zip(&self.diag[1..])
                .zip(&lower[1..])
                .zip(&upper[1..])
            {
                *o = flush(d * c[1] + lo * c[0] + up * c[2]);
            }
            return;
        }
        for (i, ((o, a), (&c, &d))) in out
            .iter_mut()
            .zip(acc.iter_mut())
            .zip(cur.iter().zip(&self.diag))
            .enumerate()
        {
            *a += w * c;
            let sum = d * c + rows.dot(i, cur);
            // Subnormals would slow every later step to a crawl.
            *o = if sum < FLUSH_BELOW { 0.0 } else { sum };
        }
    }

    fn chunk(&self, v: &[f64], dt: f64, tol: f64, side: Side) -> Vec<f64> {
        let pw = PoissonWeights::new(self.lambda * dt, tol);
        let n = v.len();
        let mut cur = v.to_vec();
        let mut next = vec![0.0; n];
        let mut acc = vec![0.0; n];
        let right = pw.right();
        for k in 0..right {
            let w = if k >= pw.left {
                pw.weights[k - pw.left]
            } else {
                0.0
            };
            self.step(&cur, &mut next, &mut acc, w, side);
            std::mem::swap(&mut cur, &mut next);
        }
        let w = pw.weights[right - pw.left];
        acc.iter_mut().zip(&cur).for_each(|(a, c)| *a += w * c);
        acc
    }

    fn evolve(&self, v: &[f64], t: f64, tol: f64, side: Side) -> Result<Scaled> {
        check_time(t, tol)?;
        if v.len() != self.len() {
            return Err(QsdError::DimensionMismatch {
                expected: self.len(),
                got: v.len(),
            });
        }
        if t == 0.0 || self.lambda == 0.0 {
            return Ok(Scaled {
                vector: v.to_vec(),
                log_scale: 0.0,
            });
        }
        let norm = |x: &[f64]| match side {
            Side::Left => x.iter().sum::<f64>(),
            Side::Right => x.iter().copied().fold(0.0, f64::max),
        };
        let mut cur = v.to_vec();
        let mut log_scale = 0.0;
        let n0 = norm(&cur);
        if !(n0 > 0.0) {
            return Ok(Scaled {
                vector: cur,
                log_scale,
            });
        }
        cur.iter_mut().for_each(|c| *c /= n0);
        log_scale += n0.ln();

        // Truncation error of a chunk is at most `tol_c` times the input
        // norm; `tol_c` is tightened until it is `tol` relative to the
        // output norm, and chunks that would underflow are split.
        let mut dt = t / (self.lambda * t / MAX_CHUNK_RATE).ceil().max(1.0);
        let mut elapsed = 0.0;
        let mut last_ratio: f64 = 1.0;
        while elapsed < t {
            let step = dt.min(t - elapsed);
            let mut tol_c = 0.5 * tol * last_ratio.min(1.0);
            let (next, ratio) = loop {
                let next = self.chunk(&cur, step, tol_c, side);
                let ratio = norm(&next);
                if !(ratio >= MIN_CHUNK_RATIO) && self.lambda * step > 1.0 {
                    break (None, ratio);
                }
                if ratio > 0.0 && tol_c > tol * ratio {
                    tol_c = 0.5 * tol * ratio;
                    continue;
                }
                break (Some(next), ratio);
            };
            let Some(next) = next else {
                dt = 0.5 * step;
                continue;
            };
            elapsed = if step == t - elapsed {
                t
            } else {
                elapsed + step
            };
            cur = next;
            last_ratio = ratio;
            if !(ratio > 0.0) {
                break;
            }
            cur.iter_mut().for_each(|c| *c /= ratio);
            log_scale += ratio.ln();
        }
        Ok(Scaled {
            vector: cur,
            log_scale,
        })
    }

    /// `v P_t` in scaled form.
    pub fn evolve_left(&self, v: &[f64], t: f64, tol: f64) -> Result<Scaled> {
        self.evolve(v, t, tol, Side::Left)
    }

    /// `P_t f` in scaled form (`f >= 0`).
    pub fn evolve_right(&self, f: &[f64], t: f64, tol: f64) -> Result<Scaled> {
        self.evolve(f, t, tol, Side::Right)
    }

    /// `μ P_t` as a sub-probability vector.
    pub fn apply(&self, mu: &ProbabilityVector, t: f64, tol: f64) -> Result<ProbabilityVector> {
        let s = self.evolve_left(mu.weights(), t, tol)?;
        Ok(ProbabilityVector::from_computed(s.unscaled()))
    }

    /// `μ A_t` together with `ln P_μ(t < ext)`.
    pub fn conditioned(
        &self,
        mu: &ProbabilityVector,
        t: f64,
        tol: f64,
    ) -> Result<(ProbabilityVector, f64)> {
        let s = self.evolve_left(mu.weights(), t, tol)?;
        let log_mass = s.log_mass();
        if !(log_mass >= UNDERFLOW_MASS.ln()) {
            return Err(QsdError::ExtinctMass {
                mass: log_mass.exp(),
            });
        }
        let total: f64 = s.vector.iter().sum();
        let v = s.vector.iter().map(|x| x / total).collect();
        Ok((ProbabilityVector::from_computed(v), log_mass))
    }

    /// `P_x(t < ext)` for every state `x`.
    pub fn survival(&self, t: f64, tol: f64) -> Result<Vec<f64>> {
        Ok(self
            .evolve_right(&vec![1.0; self.len()], t, tol)?
            .unscaled())
    }

    /// Survival vectors `P_·(t < ext)` on an increasing time grid, evolved
    /// incrementally.
    pub fn survival_curve(&self, times: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
        self.right_curve(&vec![1.0; self.len()], times, tol)
    }

    /// `P_t f` on an increasing time grid.
    pub fn right_curve(&self, f: &[f64], times: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .right_curve_scaled(f, times, tol)?
            .iter()
            .map(Scaled::unscaled)
            .collect())
    }

    /// `P_t f` on an increasing time grid, in scaled form.
    pub fn right_curve_scaled(&self, f: &[f64], times: &[f64], tol: f64) -> Result<Vec<Scaled>> {
        self.curve(f, times, tol, Side::Right)
    }

    /// `μ P_t` on an increasing time grid, in scaled form.
    pub fn left_curve(&self, v: &[f64], times: &[f64], tol: f64) -> Result<Vec<Scaled>> {
        self.curve(v, times, tol, Side::Left)
    }

    fn curve(&self, v: &[f64], times: &[f64], tol: f64, side: Side) -> Result<Vec<Scaled>> {
        check_grid(times)?;
        let mut out = Vec::with_capacity(times.len());
        let mut cur = Scaled {
            vector: v.to_vec(),
            log_scale: 0.0,
        };
        let mut last = 0.0;
        for &t in times {
            let step = self.evolve(&cur.vector, t - last, tol, side)?;
            cur = Scaled {
                vector: step.vector,
                log_scale: cur.log_scale + step.log_scale,
            };
            out.push(cur.clone());
            last = t;
        }
        Ok(out)
    }
}

fn check_time(t: f64, tol: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(QsdError::NonFinite(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(QsdError::invalid(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    Ok(())
}

fn check_grid(times: &[f64]) -> Result<()> {
    let mut last = 0.0;
    for &t in times {
        if !t.is_finite() || t < last {
            return Err(QsdError::invalid(
                "time grid must be finite, nonnegative and nondecreasing",
            ));
        }
        last = t;
    }
    Ok(())
}

/// `μ P_t` by uniformization; the result's mass is `P_μ(t < ext)`.
pub fn semigroup_apply(
    gen: &SubMarkovGenerator,
    mu: &ProbabilityVector,
    t: f64,
    tol: f64,
) -> Result<ProbabilityVector> {
    gen.check_dim(mu.len())?;
    Uniformizer::new(gen).apply(mu, t, tol)
}

/// `P_t f` by uniformization, for `f >= 0`.
pub fn semigroup_apply_right(
    gen: &SubMarkovGenerator,
    f: &[f64],
    t: f64,
    tol: f64,
) -> Result<Vec<f64>> {
    gen.check_dim(f.len())?;
    if f.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(QsdError::invalid(
            "right action needs a finite nonnegative function",
        ));
    }
    Ok(Uniformizer::new(gen).evolve_right(f, t, tol)?.unscaled())
}

/// The distribution conditioned on non-extinction, `μ A_t = μ P_t / P_μ(t < ext)`.
pub fn dcne(
    gen: &SubMarkovGenerator,
    mu: &ProbabilityVector,
    t: f64,
    tol: f64,
) -> Result<ProbabilityVector> {
    gen.check_dim(mu.len())?;
    Ok(Uniformizer::new(gen).conditioned(mu, t, tol)?.0)
}

/// `η_t(x) = e^{λ₀ t} P_x(t < ext)`.
pub fn survival_capacity_t(
    gen: &SubMarkovGenerator,
    x: usize,
    t: f64,
    lambda0: f64,
    tol: f64,
) -> Result<f64> {
    let mu = ProbabilityVector::dirac(gen.len(), x)?;
    let s = Uniformizer::new(gen).evolve_left(mu.weights(), t, tol)?;
    Ok((s.log_mass() + lambda0 * t).exp())
}
