//! Descent from infinity of the bounding process
//! `dY = ψ(Y) dt + dB`, `ψ(y) = −1/(2y) + r_D·y/2 − c_Y·y³`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::mc::rng::{derive_seed, mean_stderr, par_paths, PathRng};

pub fn psi(r_d: f64, c_y: f64, y: f64) -> f64 {
    -0.5 / y + 0.5 * r_d * y - c_y * y * y * y
}

/// Level treated as having hit zero.
const Y_FLOOR: f64 = 1e-3;
/// Largest drift-Lipschitz times step.
const STIFF_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YEnd {
    /// Came down to the target level.
    Descended,
    /// Hit zero.
    Extinct,
    Horizon,
}

/// Euler–Maruyama for the bounding process from `y0` until it falls to
/// `target`, hits zero, or `t_max`. Steps shrink where the cubic drift is
/// stiff and near zero.
pub fn run_bounding(
    r_d: f64,
    c_y: f64,
    y0: f64,
    target: f64,
    dt: f64,
    t_max: f64,
    rng: &mut PathRng,
) -> (YEnd, f64) {
    let mut y = y0;
    let mut t = 0.0;
    if y <= target {
        return (YEnd::Descended, 0.0);
    }
    while t < t_max {
        let lip = 0.5 / (y * y) + 0.5 * r_d.abs() + 3.0 * c_y * y * y;
        let h = dt
            .min(STIFF_STEP / lip)
            .min(STIFF_STEP * y * y)
            .min(t_max - t);
        let db: f64 = rng.sample(StandardNormal);
        y += psi(r_d, c_y, y) * h + h.sqrt() * db;
        t = if h == t_max - t { t_max } else { t + h };
        if y <= Y_FLOOR {
            return (YEnd::Extinct, t);
        }
        if y <= target {
            return (YEnd::Descended, t);
        }
    }
    (YEnd::Horizon, t)
}

/// Deterministic time to come down from `+∞` to `y` under the
/// large-`y` part of the drift, `ẏ = r_D·y/2 − c_Y·y³`.
pub fn descent_time_from_infinity(r_d: f64, c_y: f64, y: f64) -> f64 {
    let a = 0.5 * r_d;
    let cy2 = c_y * y * y;
    if cy2 <= a {
        return f64::INFINITY;
    }
    if a.abs() < 1e-12 * cy2 {
        return 1.0 / (2.0 * cy2);
    }
    // ∫_y^∞ dz / (c z³ − a z) = ln(c y²/(c y² − a)) / (2a)
    (-(-a / cy2).ln_1p()) / (2.0 * a)
}

/// A level from which noise-free descent from infinity takes `t_d/2`,
/// raised by three standard deviations of the noise over `t_d`.
pub fn descent_level(r_d: f64, c_y: f64, t_d: f64) -> Result<f64> {
    if !(c_y > 0.0 && t_d > 0.0) {
        return Err(QsdError::invalid("need c_Y > 0 and t_D > 0"));
    }
    let (mut lo, mut hi) = (1e-6, 1.0);
    while descent_time_from_infinity(r_d, c_y, hi) > 0.5 * t_d {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if descent_time_from_infinity(r_d, c_y, mid) > 0.5 * t_d {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi + 3.0 * t_d.sqrt())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentConfig {
    pub r_d: f64,
    pub c_y: f64,
    pub t_d: f64,
    pub y_grid: Vec<f64>,
    /// Growth rates for the extinction sweep, typically decreasing.
    pub r_sweep: Vec<f64>,
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentRow {
    pub y: f64,
    /// `P_y(t_D < time to fall below y∞)`.
    pub p_fail: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub r_d: f64,
    /// `P_{y∞}(extinction by t_D)`.
    pub p_extinct: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentReport {
    pub y_inf: f64,
    pub rows: Vec<DescentRow>,
    /// Largest failure probability over the grid.
    pub uniform_bound: f64,
    pub sweep: Vec<SweepRow>,
}

pub fn ydp_descent_check(cfg: &DescentConfig) -> Result<DescentReport> {
    if cfg.n_paths == 0 || !(cfg.dt > 0.0) || cfg.y_grid.iter().any(|&y| !(y > 0.0)) {
        return Err(QsdError::invalid(
            "need paths, dt > 0 and positive start levels",
        ));
    }
    let y_inf = descent_level(cfg.r_d, cfg.c_y, cfg.t_d)?;
    let rows = cfg
        .y_grid
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let fails: Vec<f64> =
                par_paths(derive_seed(cfg.seed, i as u64), cfg.n_paths, |_, rng| {
                    let (end, _) = run_bounding(cfg.r_d, cfg.c_y, y, y_inf, cfg.dt, cfg.t_d, rng);
                    if end == YEnd::Horizon {
                        1.0
                    } else {
                        0.0
                    }
                });
            let (p_fail, stderr) = mean_stderr(&fails);
            DescentRow { y, p_fail, stderr }
        })
        .collect::<Vec<_>>();
    let sweep = cfg
        .r_sweep
        .iter()
        .enumerate()
        .map(|(i, &r_d)| {
            let ext: Vec<f64> = par_paths(
                derive_seed(cfg.seed, 1000 + i as u64),
                cfg.n_paths,
                |_, rng| {
                    let (end, _) = run_bounding(r_d, cfg.c_y, y_inf, 0.0, cfg.dt, cfg.t_d, rng);
                    if end == YEnd::Extinct {
                        1.0
                    } else {
                        0.0
                    }
                },
            );
            let (p_extinct, stderr) = mean_stderr(&ext);
            SweepRow {
                r_d,
                p_extinct,
                stderr,
            }
        })
        .collect();
    Ok(DescentReport {
        y_inf,
        uniform_bound: rows.iter().map(|r| r.p_fail).fold(0.0, f64::max),
        rows,
        sweep,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::rng::stream;

    #[test]
    fn descent_time_closed_forms() {
        assert!((descent_time_from_infinity(0.0, 2.0, 0.5) - 1.0).abs() < 1e-12);
        // Numerical quadrature of 1/(c z³ − a z) against the closed form.
        let (r, c, y) = (3.0, 0.5, 2.0);
        let a = 0.5 * r;
        // Substitute z = y/s, dz = −y/s² ds, s ∈ (0, 1].
        let m = 200_000;
        let quad: f64 = (0..m)
            .map(|k| {
                let s = (k as f64 + 0.5) / m as f64;
                let z = y / s;
                y / (s * s) / (c * z * z * z - a * z) / m as f64
            })
            .sum();
        assert!((descent_time_from_infinity(r, c, y) - quad).abs() < 1e-8);
        assert_eq!(descent_time_from_infinity(4.0, 1.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn start_below_level_descends_at_once() {
        let (end, t) = run_bounding(0.0, 1.0, 0.5, 1.0, 1e-3, 1.0, &mut stream(0, 0));
        assert_eq!((end, t), (YEnd::Descended, 0.0));
    }

    #[test]
    fn uniform_descent_and_sweep_direction() {
        let cfg = DescentConfig {
            r_d: 1.0,
            c_y: 0.5,
            t_d: 1.0,
            y_grid: vec![0.5, 5.0, 50.0, 5e3, 5e5],
            r_sweep: vec![0.0, -4.0, -16.0],
            n_paths: 400,
            dt: 1e-3,
            seed: 9,
        };
        let rep = ydp_descent_check(&cfg).unwrap();
        assert_eq!(rep.rows[0].p_fail, 0.0);
        assert!(rep.uniform_bound < 0.05, "{:?}", rep.rows);
        let p: Vec<f64> = rep.sweep.iter().map(|s| s.p_extinct).collect();
        assert!(p[0] < p[1] && p[1] < p[2], "{p:?}");
    }
}
