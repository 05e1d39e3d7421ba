//! Decay of `μA_t → α` and `⟨μ|η_t⟩ → ⟨μ|η⟩` along a time grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eigen::{solve_eigentriple, EigenPair, DEFAULT_MAX_ITER};
use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::semigroup::{Uniformizer, DEFAULT_TOL};
use crate::vector::ProbabilityVector;

/// Values below this (underflow, or a law that already is the QSD) are left
/// out of slope fits.
pub const TV_NOISE_FLOOR: f64 = 1e-280;

/// Longest step between re-projections of the non-Perron part; the
/// cancellation in one step costs at most a factor `e^{gap·step}`.
const DEFLATION_STEP: f64 = 0.25;
const DEFLATION_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRow {
    pub mu_index: usize,
    pub t: f64,
    pub tv_to_alpha: f64,
    pub eta_deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceProfile {
    pub rows: Vec<ProfileRow>,
    /// Per initial law: decay rate `-d ln TV / dt` fitted over the tail half
    /// of the grid (`None` when fewer than two points sit above the noise floor).
    pub tv_rates: Vec<Option<f64>>,
    /// Same fit for the η deviation.
    pub eta_rates: Vec<Option<f64>>,
    pub eigen: EigenPair,
}

impl ConvergenceProfile {
    /// Slowest fitted TV decay over all initial laws.
    pub fn slowest_tv_rate(&self) -> Option<f64> {
        self.tv_rates.iter().flatten().copied().reduce(f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("mu_index,t,tv_to_alpha,eta_deviation\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:e},{:e}\n",
                r.mu_index, r.t, r.tv_to_alpha, r.eta_deviation
            ));
        }
        s
    }
}

/// Least-squares slope of `ln y` against `t` over the points with
/// `y > floor`, returned as a decay rate (`-slope`).
pub fn fitted_decay_rate(ts: &[f64], ys: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ts
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > floor && y.is_finite())
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| -sxy / sxx)
}

pub fn convergence_profile(
    gen: &SubMarkovGenerator,
    mus: &[ProbabilityVector],
    t_grid: &[f64],
) -> Result<ConvergenceProfile> {
    let eigen = solve_eigentriple(gen, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    profile_with(gen, &eigen, mus, t_grid)
}

pub fn profile_with(
    gen: &SubMarkovGenerator,
    eigen: &EigenPair,
    mus: &[ProbabilityVector],
    t_grid: &[f64],
) -> Result<ConvergenceProfile> {
    for mu in mus {
        gen.check_dim(mu.len())?;
    }
    let uni = Uniformizer::new(gen);
    let per_mu: Vec<Vec<ProfileRow>> = mus
        .par_iter()
        .enumerate()
        .map(|(i, mu)| {
            Ok(deflated_curve(&uni, eigen, mu, t_grid)?
                .into_iter()
                .zip(t_grid)
                .map(|((tv, eta_dev), &t)| ProfileRow {
                    mu_index: i,
                    t,
                    tv_to_alpha: tv,
                    eta_deviation: eta_dev,
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let tail = t_grid.len() / 2;
    let fit = |rows: &[ProfileRow], pick: fn(&ProfileRow) -> f64| {
        let ts: Vec<f64> = rows[tail..].iter().map(|r| r.t).collect();
        let ys: Vec<f64> = rows[tail..].iter().map(pick).collect();
        fitted_decay_rate(&ts, &ys, TV_NOISE_FLOOR)
    };
    let tv_rates = per_mu.iter().map(|r| fit(r, |r| r.tv_to_alpha)).collect();
    let eta_rates = per_mu.iter().map(|r| fit(r, |r| r.eta_deviation)).collect();
    Ok(ConvergenceProfile {
        rows: per_mu.into_iter().flatten().collect(),
        tv_rates,
        eta_rates,
        eigen: eigen.clone(),
    })
}

/// `(‖μA_t − α‖_TV, |⟨μ|η_t⟩ − ⟨μ|η⟩|)` along a nondecreasing grid.
///
/// Both are read off the non-Perron part `w_t = μP_t − ⟨μ|η⟩e^{−λ₀t}α`:
/// `μA_t − α = (w_t − ⟨w_t|1⟩α)/|μP_t|` and `⟨μ|η_t⟩ − ⟨μ|η⟩ = e^{λ₀t}⟨w_t|1⟩`.
/// Evolving `μ` itself would leave an absolute round-off floor near the
/// solver tolerance; `w_t` is instead evolved in short steps and
/// re-projected after each, so it stays accurate relative to its own size
/// and the tail of the decay can be measured far below that floor.
pub fn deflated_curve(
    uni: &Uniformizer,
    eigen: &EigenPair,
    mu: &ProbabilityVector,
    t_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if t_grid.windows(2).any(|w| !(w[0] <= w[1]))
        || t_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite()))
    {
        return Err(QsdError::invalid(
            "time grid must be finite, nonnegative and nondecreasing",
        ));
    }
    let alpha = eigen.alpha.weights();
    let eta = &eigen.eta;
    let project = |w: &mut [f64]| {
        let c: f64 = w.iter().zip(eta).map(|(a, b)| a * b).sum();
        w.iter_mut().zip(alpha).for_each(|(x, a)| *x -= c * a);
    };
    let perron = mu.dot(eta);
    let mut w: Vec<f64> = mu.weights().to_vec();
    project(&mut w);
    let mut log_w = 0.0;
    let rescale = |w: &mut [f64], log_w: &mut f64| {
        let n: f64 = w.iter().map(|x| x.abs()).sum();
        if n > 0.0 {
            w.iter_mut().for_each(|x| *x /= n);
            *log_w += n.ln();
        }
        n > 0.0
    };
    let mut alive = rescale(&mut w, &mut log_w);
    let mut now = 0.0;
    let mut out = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        while alive && now < t {
            let h = DEFLATION_STEP.min(t - now);
            let pos: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
            let neg: Vec<f64> = w.iter().map(|x| (-x).max(0.0)).collect();
            let p = uni.evolve_left(&pos, h, DEFLATION_TOL)?;
            let q = uni.evolve_left(&neg, h, DEFLATION_TOL)?;
            let shift = p.log_scale.max(q.log_scale);
            let (fp, fq) = ((p.log_scale - shift).exp(), (q.log_scale - shift).exp());
            w = p
                .vector
                .iter()
                .zip(&q.vector)
                .map(|(a, b)| a * fp - b * fq)
                .collect();
            log_w += shift;
            project(&mut w);
            alive = rescale(&mut w, &mut log_w);
            now = if h == t - now { t } else { now + h };
        }
        if !alive {
            out.push((0.0, 0.0));
            continue;
        }
        let sum: f64 = w.iter().sum();
        let spread: f64 = w.iter().zip(alpha).map(|(x, a)| (x - sum * a).abs()).sum();
        // |μP_t| in units of e^{log_w}.
        let mass = perron * (-eigen.lambda0 * t - log_w).exp() + sum;
        let tv = if mass > 0.0 {
            0.5 * spread / mass
        } else {
            f64::NAN
        };
        out.push((tv.min(1.0), sum.abs() * (log_w + eigen.lambda0 * t).exp()));
    }
    Ok(out)
}
