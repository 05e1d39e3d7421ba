//! Laplace exponent and extinction probabilities of the Feller branching
//! diffusion `dZ = r₊Z dt + σ√Z dB`.

use serde::{Deserialize, Serialize};

use super::diffusion::{run_diffusion, DiffusionSpec, Field, PathEnd, SimConfig};
use crate::error::{QsdError, Result};
use crate::mc::rng::{mean_stderr, par_paths};

/// Initial parameter of the two large-λ evaluations behind `u∞`.
pub const LAMBDA_HIGH: f64 = 1e8;
pub const LAMBDA_LOW: f64 = 1e7;

const ODE_TOL: f64 = 1e-13;
const MAX_STEPS: usize = 1_000_000;

/// Adaptive classical RK4 with step doubling for a scalar autonomous ODE.
/// The local error estimate of each accepted step is below `tol · |y|`,
/// and the extrapolated value is kept.
pub fn integrate_rk4(f: impl Fn(f64) -> f64, y0: f64, t: f64, tol: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite() && y0.is_finite()) {
        return Err(QsdError::invalid(format!(
            "cannot integrate from {y0} over {t}"
        )));
    }
    let rk4 = |y: f64, h: f64| {
        let k1 = f(y);
        let k2 = f(y + 0.5 * h * k1);
        let k3 = f(y + 0.5 * h * k2);
        let k4 = f(y + h * k3);
        y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    };
    let mut y = y0;
    let mut s = 0.0;
    let mut h = (t / 16.0).max(f64::MIN_POSITIVE);
    for _ in 0..MAX_STEPS {
        if s >= t {
            return Ok(y);
        }
        h = h.min(t - s);
        let full = rk4(y, h);
        let half = rk4(rk4(y, 0.5 * h), 0.5 * h);
        let err = (half - full).abs() / 15.0;
        if !half.is_finite() {
            return Err(QsdError::OdeFailure(format!(
                "non-finite state at time {s}"
            )));
        }
        let scale = tol * half.abs().max(f64::MIN_POSITIVE);
        if err <= scale {
            y = half + (half - full) / 15.0;
            s = if h == t - s { t } else { s + h };
            let grow = if err > 0.0 {
                0.9 * (scale / err).powf(0.2)
            } else {
                4.0
            };
            h *= grow.clamp(0.2, 4.0);
        } else {
            h *= (0.9 * (scale / err).powf(0.2)).clamp(0.1, 0.5);
            if h < 1e-14 * t.max(1.0) {
                return Err(QsdError::OdeFailure(format!(
                    "step size underflow at time {s}"
                )));
            }
        }
    }
    Err(QsdError::OdeFailure(format!("more than {MAX_STEPS} steps")))
}

fn check(sigma: f64, t: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(QsdError::invalid(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(QsdError::invalid(format!("t must be positive, got {t}")));
    }
    Ok(())
}

/// `u(t, λ)` with `E_z[exp(-λ Z_t)] = exp(-z u(t, λ))`, solving
/// `∂_t u = r₊u − σ²u²/2`, `u(0) = λ`.
///
/// Integrated through `w = 1/u`, which obeys the linear equation
/// `w' = −r₊w + σ²/2` and stays well conditioned for huge `λ`.
pub fn csbp_laplace(r_plus: f64, sigma: f64, t: f64, lambda: f64) -> Result<f64> {
    check(sigma, t)?;
    if !(lambda > 0.0 && r_plus.is_finite()) {
        return Err(QsdError::invalid("lambda must be positive and r finite"));
    }
    let half = 0.5 * sigma * sigma;
    let w = integrate_rk4(|w| -r_plus * w + half, 1.0 / lambda, t, ODE_TOL)?;
    Ok(1.0 / w)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtinctionLimit {
    pub u_high: f64,
    pub u_low: f64,
    /// One Richardson step in `1/λ` between the two evaluations.
    pub u_inf: f64,
    /// `|u_inf − u_high| / u_inf`.
    pub rel_correction: f64,
}

/// `lim_{λ→∞} u(t, λ)`, from `λ = 10⁸` extrapolated against `λ = 10⁷`.
pub fn csbp_u_infinity(r_plus: f64, sigma: f64, t: f64) -> Result<ExtinctionLimit> {
    let u_high = csbp_laplace(r_plus, sigma, t, LAMBDA_HIGH)?;
    let u_low = csbp_laplace(r_plus, sigma, t, LAMBDA_LOW)?;
    // Error is linear in 1/λ for large λ.
    let k = LAMBDA_HIGH / LAMBDA_LOW;
    let u_inf = (k * u_high - u_low) / (k - 1.0);
    Ok(ExtinctionLimit {
        u_high,
        u_low,
        u_inf,
        rel_correction: ((u_inf - u_high) / u_inf).abs(),
    })
}

/// `P_{z₀}(Z_t = 0) = exp(−z₀ u∞(t))`.
pub fn csbp_extinction(z0: f64, r_plus: f64, sigma: f64, t: f64) -> Result<f64> {
    if !(z0 >= 0.0 && z0.is_finite()) {
        return Err(QsdError::invalid(format!(
            "z0 must be finite and >= 0, got {z0}"
        )));
    }
    Ok((-z0 * csbp_u_infinity(r_plus, sigma, t)?.u_inf).exp())
}

/// The branching diffusion as a special case of the population model:
/// constant growth, no competition, no trait noise.
pub fn feller_spec(r_plus: f64, sigma: f64, eps_abs: f64) -> DiffusionSpec {
    DiffusionSpec {
        dim: 1,
        r: Field::Constant { value: r_plus },
        c: 0.0,
        sigma_n: sigma,
        b: Default::default(),
        sigma_x: Field::Constant { value: 0.0 },
        rho_c: Field::Constant { value: 0.0 },
        eps_abs: Some(eps_abs),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtinctionEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub seed: u64,
}

/// Monte Carlo `P_{z₀}(Z_t = 0)` by full-truncation Euler–Maruyama.
pub fn simulate_extinction(
    z0: f64,
    r_plus: f64,
    sigma: f64,
    t: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ExtinctionEstimate> {
    check(sigma, t)?;
    let spec = feller_spec(r_plus, sigma, 1e-6 * z0.max(1e-300));
    spec.validate()?;
    let cfg = SimConfig { dt, t_max: t };
    let hits = par_paths(seed, n_paths, |_, rng| {
        run_diffusion(&spec, &[0.0], z0, &cfg, rng, |_, _, _| false).map(|end| {
            if end.end == PathEnd::Extinct {
                1.0
            } else {
                0.0
            }
        })
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let (estimate, stderr) = mean_stderr(&hits);
    Ok(ExtinctionEstimate {
        estimate,
        stderr,
        n_paths,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Separable Riccati equation solved by hand.
    fn critical(sigma: f64, t: f64, lambda: f64) -> f64 {
        lambda / (1.0 + sigma * sigma * lambda * t / 2.0)
    }

    fn supercritical_limit(r: f64, sigma: f64, t: f64) -> f64 {
        2.0 * r / (sigma * sigma * (1.0 - (-r * t).exp()))
    }

    #[test]
    fn critical_closed_form() {
        for (sigma, t, lambda) in [(1.0, 1.0, 1.0), (0.5, 3.0, 20.0), (2.0, 0.1, 1e6)] {
            let u = csbp_laplace(0.0, sigma, t, lambda).unwrap();
            let exact = critical(sigma, t, lambda);
            assert!(((u - exact) / exact).abs() < 1e-12, "{u} vs {exact}");
        }
        let lim = csbp_u_infinity(0.0, 1.5, 2.0).unwrap();
        let exact = 2.0 / (1.5 * 1.5 * 2.0);
        assert!(((lim.u_inf - exact) / exact).abs() < 1e-12);
        let p = csbp_extinction(0.7, 0.0, 1.5, 2.0).unwrap();
        assert!((p - (-2.0 * 0.7 / (1.5 * 1.5 * 2.0f64)).exp()).abs() < 1e-12);
    }

    #[test]
    fn supercritical_limit_matches() {
        for (r, sigma, t) in [(0.5, 1.0, 1.0), (2.0, 0.3, 4.0), (-1.0, 1.0, 2.0)] {
            let u = csbp_u_infinity(r, sigma, t).unwrap().u_inf;
            let exact = supercritical_limit(r, sigma, t);
            assert!(((u - exact) / exact).abs() < 1e-10, "r = {r}");
        }
    }

    #[test]
    fn extinction_limits_in_z0() {
        assert!((csbp_extinction(1e-12, 0.5, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-10);
        assert!(csbp_extinction(1e4, 0.5, 1.0, 1.0).unwrap() < 1e-100);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(csbp_laplace(0.0, 0.0, 1.0, 1.0).is_err());
        assert!(csbp_laplace(0.0, 1.0, -1.0, 1.0).is_err());
        assert!(csbp_extinction(-1.0, 0.0, 1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn branching_semigroup_law(r in -1.0..2.0f64, sigma in 0.2..2.0f64, s in 0.05..3.0f64,
                                   t in 0.05..3.0f64, lambda in 0.01..100.0f64) {
            let direct = csbp_laplace(r, sigma, s + t, lambda).unwrap();
            let inner = csbp_laplace(r, sigma, t, lambda).unwrap();
            let composed = csbp_laplace(r, sigma, s, inner).unwrap();
            prop_assert!(((direct - composed) / direct).abs() < 1e-10);
        }

        #[test]
        fn concave_increasing_in_lambda(r in -1.0..2.0f64, sigma in 0.2..2.0f64, t in 0.05..3.0f64,
                                        a in 0.01..50.0f64, gap in 0.01..50.0f64) {
            let b = a + gap;
            let m = 0.5 * (a + b);
            let (ua, ub, um) = (
                csbp_laplace(r, sigma, t, a).unwrap(),
                csbp_laplace(r, sigma, t, b).unwrap(),
                csbp_laplace(r, sigma, t, m).unwrap(),
            );
            prop_assert!(ub > ua);
            prop_assert!(um >= 0.5 * (ua + ub) * (1.0 - 1e-12));
        }
    }
}
