use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{AssumptionCertificate, Exhaustion, SvRoute, Verdict, Witness, PADDING};
use crate::eigen::{killed_perron_rate, solve_eigentriple, DEFAULT_MAX_ITER};
use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::semigroup::{Uniformizer, DEFAULT_TOL};
use crate::vector::ProbabilityVector;

/// Transitory sets up to this size are solved by dense LU.
const DENSE_LIMIT: usize = 2000;
/// Entry-level slack tolerated when re-checking stored inequalities.
const REVERIFY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum AlphaChoice {
    /// Normalized entrywise minimum of the killed rows: the minorant with the
    /// largest constant for the given `(n, m, t)`.
    Auto,
    Given(ProbabilityVector),
}

/// Rows `δ_x P_t` of the process killed on leaving `domain`, for `x ∈ rows`,
/// laid out over the full state set.
fn killed_rows(
    gen: &SubMarkovGenerator,
    domain: &[usize],
    rows: &[usize],
    t: f64,
) -> Result<Vec<Vec<f64>>> {
    let sub = gen.restrict(domain)?;
    let uni = Uniformizer::new(&sub);
    let mut pos = vec![usize::MAX; gen.len()];
    domain.iter().enumerate().for_each(|(p, &x)| pos[x] = p);
    rows.par_iter()
        .map(|&x| {
            let mut start = vec![0.0; domain.len()];
            start[pos[x]] = 1.0;
            let local = uni.evolve_left(&start, t, DEFAULT_TOL)?.unscaled();
            let mut row = vec![0.0; gen.len()];
            domain.iter().zip(local).for_each(|(&y, v)| row[y] = v);
            Ok(row)
        })
        .collect()
}

/// Largest `c` with `row ≥ c·alpha` for every row, and the row attaining it.
fn minorant_constant(rows: &[Vec<f64>], row_states: &[usize], alpha: &[f64]) -> (f64, usize) {
    let mut best = (f64::INFINITY, row_states[0]);
    for (row, &x) in rows.iter().zip(row_states) {
        for (r, a) in row.iter().zip(alpha) {
            if *a > 0.0 && r / a < best.0 {
                best = (r / a, x);
            }
        }
    }
    best
}

pub fn check_mix(
    gen: &SubMarkovGenerator,
    exh: &Exhaustion,
    n: usize,
    t: f64,
    alpha_c: &AlphaChoice,
) -> Result<AssumptionCertificate> {
    exh.validate(gen.len())?;
    if n >= exh.len() {
        return Err(QsdError::invalid(format!(
            "level {n} outside the exhaustion"
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(QsdError::invalid("mixing time must be finite and > 0"));
    }
    if let AlphaChoice::Given(a) = alpha_c {
        gen.check_dim(a.len())?;
    }
    let rows_states = exh.set(n);
    // (c, m, alpha, counterexample)
    let mut best: Option<(f64, usize, Vec<f64>, usize)> = None;
    for m in n..exh.len() {
        let rows = killed_rows(gen, exh.set(m), rows_states, t)?;
        let candidate = match alpha_c {
            AlphaChoice::Auto => {
                let mut mins = rows[0].clone();
                for row in &rows[1..] {
                    mins.iter_mut().zip(row).for_each(|(a, b)| *a = a.min(*b));
                }
                let c: f64 = mins.iter().sum();
                let weakest = rows
                    .iter()
                    .zip(rows_states)
                    .min_by(|a, b| a.0.iter().sum::<f64>().total_cmp(&b.0.iter().sum::<f64>()))
                    .map(|(_, &x)| x)
                    .unwrap();
                let alpha = if c > 0.0 {
                    mins.iter().map(|v| v / c).collect()
                } else {
                    mins
                };
                (c, m, alpha, weakest)
            }
            AlphaChoice::Given(a) => {
                let (c, x) = minorant_constant(&rows, rows_states, a.weights());
                (c, m, a.weights().to_vec(), x)
            }
        };
        if best.as_ref().is_none_or(|b| candidate.0 > b.0) {
            best = Some(candidate);
        }
    }
    let (c_raw, m, alpha, weakest) = best.expect("at least one enclosure");
    let holds = c_raw > 0.0;
    Ok(AssumptionCertificate {
        witness: Witness::Mix {
            n,
            m,
            t,
            c_raw,
            c: c_raw / PADDING,
        },
        verdict: if holds {
            Verdict::Holds
        } else {
            Verdict::Fails {
                state: Some(weakest),
                reason: "killed rows admit no common minorant".into(),
            }
        },
        alpha_c: holds.then(|| ProbabilityVector::from_computed(alpha)),
    })
}

/// Lower bound on the mixing constant at time `k·t` implied by a constant
/// `c` at time `t`, where `alpha_mass = α_c(D_n)`.
pub fn mix_extension_bound(c: f64, alpha_mass: f64, k: u32) -> f64 {
    c * (c * alpha_mass).powi(k as i32 - 1)
}

/// Scaled survival ratios `P_x(t < ext) / P_{α_c}(t < ext)` along a grid.
fn survival_ratios(
    uni: &Uniformizer,
    alpha_c: &ProbabilityVector,
    t_grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let curve = uni.right_curve_scaled(&vec![1.0; uni.len()], t_grid, DEFAULT_TOL)?;
    curve
        .into_iter()
        .map(|s| {
            let denom = alpha_c.dot(&s.vector);
            if !(denom > 0.0) || denom.ln() + s.log_scale < crate::semigroup::UNDERFLOW_MASS.ln() {
                return Err(QsdError::ExtinctMass {
                    mass: (denom.ln() + s.log_scale).exp(),
                });
            }
            Ok(s.vector.iter().map(|v| v / denom).collect())
        })
        .collect()
}

pub(crate) fn survival_ratio_max(
    uni: &Uniformizer,
    alpha_c: &ProbabilityVector,
    t_grid: &[f64],
    states: &[usize],
) -> Result<Vec<(f64, usize)>> {
    Ok(survival_ratios(uni, alpha_c, t_grid)?
        .iter()
        .map(|r| {
            states
                .iter()
                .map(|&x| (r[x], x))
                .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
        })
        .collect())
}

pub fn check_dc(
    gen: &SubMarkovGenerator,
    exh: &Exhaustion,
    alpha_c: &ProbabilityVector,
    t_floor: f64,
    t_grid: &[f64],
) -> Result<AssumptionCertificate> {
    exh.validate(gen.len())?;
    gen.check_dim(alpha_c.len())?;
    if t_grid.iter().any(|&t| t < t_floor) {
        return Err(QsdError::invalid("time grid starts below the floor"));
    }
    let dc = exh.coupling_domain();
    let uni = Uniformizer::new(gen);
    let (c_grid, x_grid) = survival_ratio_max(&uni, alpha_c, t_grid, dc)?
        .into_iter()
        .fold(
            (f64::NEG_INFINITY, dc[0]),
            |a, b| if b.0 > a.0 { b } else { a },
        );
    let eigen = solve_eigentriple(gen, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let denom = alpha_c.dot(&eigen.eta);
    let (c_limit, x_limit) =
        dc.iter()
            .map(|&x| (eigen.eta[x] / denom, x))
            .fold(
                (f64::NEG_INFINITY, dc[0]),
                |a, b| if b.0 > a.0 { b } else { a },
            );
    let c_raw = c_grid.max(c_limit);
    let verdict = if c_raw.is_finite() {
        Verdict::Holds
    } else {
        Verdict::Fails {
            state: Some(if c_grid.is_finite() { x_limit } else { x_grid }),
            reason: "survival ratio is unbounded".into(),
        }
    };
    Ok(AssumptionCertificate {
        witness: Witness::Dc {
            t_grid: t_grid.to_vec(),
            c_grid,
            c_limit,
            c_raw,
            c: c_raw * PADDING,
        },
        verdict,
        alpha_c: Some(alpha_c.clone()),
    })
}

/// `x ↦ E_x[exp(ρ·(ext ∧ τ))]` on `transitory`, where `τ` is the exit time
/// from that set. Errors with `SingularSystem` when the moment is infinite
/// for some start.
pub fn escape_moment_exact(
    gen: &SubMarkovGenerator,
    transitory: &[usize],
    rho: f64,
) -> Result<Vec<f64>> {
    let sub = gen.restrict(transitory)?;
    let n = sub.len();
    // (−Q_TT − ρ) g = exit, with exit the kill rate of the restriction.
    let exit = sub.kill_rates();
    let g = if n <= DENSE_LIMIT {
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = sub.out_rate(i) - rho;
            for (j, q) in sub.row(i) {
                a[(i, j)] -= q;
            }
        }
        let b = DVector::from_column_slice(exit);
        a.lu()
            .solve(&b)
            .ok_or_else(|| QsdError::SingularSystem(format!("escape system at rho = {rho}")))?
            .as_slice()
            .to_vec()
    } else {
        gauss_seidel(&sub, rho)?
    };
    if g.iter().any(|v| !v.is_finite() || *v < 1.0 - 1e-9) {
        return Err(QsdError::SingularSystem(format!(
            "escape moment is not finite at rho = {rho}"
        )));
    }
    Ok(g)
}

fn gauss_seidel(sub: &SubMarkovGenerator, rho: f64) -> Result<Vec<f64>> {
    let n = sub.len();
    let mut g = vec![1.0; n];
    let max_sweeps = 200_000;
    let mut change = f64::INFINITY;
    for _ in 0..max_sweeps {
        change = 0.0;
        for i in 0..n {
            let diag = sub.out_rate(i) - rho;
            if !(diag > 0.0) {
                return Err(QsdError::SingularSystem(format!(
                    "nonpositive pivot at {i}"
                )));
            }
            let mut acc = sub.kill(i);
            for (j, q) in sub.row(i) {
                acc += q * g[j];
            }
            let v = acc / diag;
            change = f64::max(change, ((v - g[i]) / v).abs());
            g[i] = v;
        }
        if change < 1e-14 {
            return Ok(g);
        }
    }
    Err(QsdError::NoConvergence {
        iterations: max_sweeps,
        residual: change,
    })
}

pub fn check_et(
    gen: &SubMarkovGenerator,
    exh: &Exhaustion,
    rho: f64,
) -> Result<AssumptionCertificate> {
    exh.validate(gen.len())?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(QsdError::invalid("escape rate rho must be finite and > 0"));
    }
    let t = exh.transitory();
    if t.is_empty() {
        return Ok(AssumptionCertificate {
            witness: Witness::ET {
                rho,
                e_t_raw: Some(1.0),
                e_t: Some(1.0),
                escape_rate: None,
                rho_et: None,
            },
            verdict: Verdict::Holds,
            alpha_c: None,
        });
    }
    let escape = killed_perron_rate(&gen.restrict(&t)?, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let rho_et = Some(0.99 * escape);
    if rho >= escape {
        return Ok(AssumptionCertificate {
            witness: Witness::ET {
                rho,
                e_t_raw: None,
                e_t: None,
                escape_rate: Some(escape),
                rho_et,
            },
            verdict: Verdict::Fails {
                state: None,
                reason: format!("rho {rho} is not below the escape rate {escape}"),
            },
            alpha_c: None,
        });
    }
    let g = escape_moment_exact(gen, &t, rho)?;
    let e_t_raw = g.iter().copied().fold(1.0, f64::max);
    Ok(AssumptionCertificate {
        witness: Witness::ET {
            rho,
            e_t_raw: Some(e_t_raw),
            e_t: Some(e_t_raw * PADDING),
            escape_rate: Some(escape),
            rho_et,
        },
        verdict: Verdict::Holds,
        alpha_c: None,
    })
}

/// `min_{x ∈ D_s, t ∈ grid} e^{ρt} P_x(t < ext ∧ T_{D_m})`, together with the
/// minimizing state, for a generator `sub` already restricted to `D_m`.
fn survival_floor(
    sub: &SubMarkovGenerator,
    local_core: &[usize],
    rho: f64,
    t_grid: &[f64],
) -> Result<(f64, usize)> {
    let uni = Uniformizer::new(sub);
    let curve = uni.right_curve_scaled(&vec![1.0; sub.len()], t_grid, DEFAULT_TOL)?;
    let mut best = (1.0, local_core[0]);
    for (s, &t) in curve.iter().zip(t_grid) {
        for &x in local_core {
            let v = if s.vector[x] > 0.0 {
                (s.vector[x].ln() + s.log_scale + rho * t).exp()
            } else {
                0.0
            };
            if v < best.0 {
                best = (v, x);
            }
        }
    }
    Ok(best)
}

fn local_positions(domain: &[usize], set: &[usize], states: usize) -> Vec<usize> {
    let mut pos = vec![usize::MAX; states];
    domain.iter().enumerate().for_each(|(p, &x)| pos[x] = p);
    set.iter().map(|&x| pos[x]).collect()
}

pub fn check_sv(
    gen: &SubMarkovGenerator,
    exh: &Exhaustion,
    t_grid: &[f64],
) -> Result<AssumptionCertificate> {
    exh.validate(gen.len())?;
    let dm = exh.mixing_enclosure();
    let sub = gen.restrict(dm)?;
    let classes = sub.communicating_classes();
    if classes.len() != 1 {
        return Err(QsdError::NotIrreducible {
            components: classes.len(),
        });
    }
    let pair = solve_eigentriple(&sub, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let rho_sv = pair.lambda0;
    let core = local_positions(dm, exh.survival_core(), gen.len());
    let (grid_min, x_grid) = survival_floor(&sub, &core, rho_sv, t_grid)?;
    let (limit_min, x_limit) =
        core.iter()
            .map(|&x| (pair.eta[x], x))
            .fold(
                (f64::INFINITY, core[0]),
                |a, b| if b.0 < a.0 { b } else { a },
            );
    let (c_raw, x) = if grid_min <= limit_min {
        (grid_min, x_grid)
    } else {
        (limit_min, x_limit)
    };
    let c_raw = c_raw.min(1.0);
    Ok(AssumptionCertificate {
        witness: Witness::Sv {
            m: exh.m,
            route: SvRoute::Perron,
            rho_sv,
            t_grid: t_grid.to_vec(),
            c_raw,
            c: c_raw / PADDING,
        },
        verdict: if c_raw > 0.0 {
            Verdict::Holds
        } else {
            Verdict::Fails {
                state: Some(dm[x]),
                reason: "survival in the enclosure vanishes".into(),
            }
        },
        alpha_c: None,
    })
}

/// Survival estimate obtained by iterating a mixing certificate at the
/// survival-core level: `c_rg = c·α_c(D_s)`, `ρ_sv = -ln(c_rg)/t`.
pub fn sv_from_regeneration(
    exh: &Exhaustion,
    mix: &AssumptionCertificate,
) -> Result<AssumptionCertificate> {
    let (Witness::Mix { n, m, t, c, .. }, Some(alpha)) = (&mix.witness, &mix.alpha_c) else {
        return Err(QsdError::invalid(
            "regeneration needs a holding mixing certificate",
        ));
    };
    if !mix.holds() {
        return Err(QsdError::invalid(
            "regeneration needs a holding mixing certificate",
        ));
    }
    if exh.s > *n {
        return Err(QsdError::invalid(
            "mixing certificate must cover the survival core",
        ));
    }
    let c_rg = c * alpha.mass_on(exh.survival_core());
    if !(c_rg > 0.0) {
        return Ok(AssumptionCertificate {
            witness: Witness::Sv {
                m: *m,
                route: SvRoute::Regeneration,
                rho_sv: f64::MAX,
                t_grid: Vec::new(),
                c_raw: 0.0,
                c: 0.0,
            },
            verdict: Verdict::Fails {
                state: None,
                reason: "minorizing measure misses the survival core".into(),
            },
            alpha_c: None,
        });
    }
    let rho_sv = -c_rg.ln() / t;
    let t_grid = (0..=80).map(|k| *t * k as f64 / 4.0).collect();
    Ok(AssumptionCertificate {
        witness: Witness::Sv {
            m: *m,
            route: SvRoute::Regeneration,
            rho_sv,
            t_grid,
            c_raw: c_rg,
            c: c_rg,
        },
        verdict: Verdict::Holds,
        alpha_c: None,
    })
}

pub fn lj_certificate() -> AssumptionCertificate {
    AssumptionCertificate {
        witness: Witness::LJ {
            note: "holds by truncation: a finite state set has finitely many jumps in bounded time"
                .into(),
        },
        verdict: Verdict::Holds,
        alpha_c: None,
    }
}

/// Re-evaluates the defining inequality of a holding certificate with its
/// stored constants on every quantified state. Returns the worst slack
/// (`>= 0` means the certificate re-verifies). Failing certificates return
/// `0.0`.
pub fn reverify(
    cert: &AssumptionCertificate,
    gen: &SubMarkovGenerator,
    exh: &Exhaustion,
) -> Result<f64> {
    exh.validate(gen.len())?;
    if !cert.holds() {
        return Ok(0.0);
    }
    match &cert.witness {
        Witness::LJ { .. } => Ok(0.0),
        Witness::Mix { n, m, t, c, .. } => {
            let alpha = cert
                .alpha_c
                .as_ref()
                .ok_or_else(|| QsdError::invalid("mixing certificate without alpha_c"))?;
            gen.check_dim(alpha.len())?;
            if *n >= exh.len() || *m >= exh.len() || m < n {
                return Err(QsdError::invalid(
                    "certificate levels outside the exhaustion",
                ));
            }
            let rows = killed_rows(gen, exh.set(*m), exh.set(*n), *t)?;
            let mut slack = f64::INFINITY;
            for row in &rows {
                for (r, a) in row.iter().zip(alpha.weights()) {
                    slack = slack.min(r - c * a);
                }
            }
            Ok(slack + REVERIFY_SLACK)
        }
        Witness::Dc { t_grid, c, .. } => {
            let alpha = cert
                .alpha_c
                .as_ref()
                .ok_or_else(|| QsdError::invalid("coupling-domain certificate without alpha_c"))?;
            gen.check_dim(alpha.len())?;
            let uni = Uniformizer::new(gen);
            let worst = survival_ratio_max(&uni, alpha, t_grid, exh.coupling_domain())?
                .into_iter()
                .map(|p| p.0)
                .fold(f64::NEG_INFINITY, f64::max);
            let eigen = solve_eigentriple(gen, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            let denom = alpha.dot(&eigen.eta);
            let limit = exh
                .coupling_domain()
                .iter()
                .map(|&x| eigen.eta[x] / denom)
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(c - worst.max(limit))
        }
        Witness::ET { rho, e_t, .. } => {
            let t = exh.transitory();
            let bound =
                e_t.ok_or_else(|| QsdError::invalid("holding escape certificate without e_T"))?;
            if t.is_empty() {
                return Ok(bound - 1.0);
            }
            let g = escape_moment_exact(gen, &t, *rho)?;
            Ok(bound - g.iter().copied().fold(1.0, f64::max))
        }
        Witness::Sv {
            m,
            rho_sv,
            t_grid,
            c,
            ..
        } => {
            if *m >= exh.len() {
                return Err(QsdError::invalid(
                    "certificate level outside the exhaustion",
                ));
            }
            let dm = exh.set(*m);
            let sub = gen.restrict(dm)?;
            let core = local_positions(dm, exh.survival_core(), gen.len());
            if core.contains(&usize::MAX) {
                return Err(QsdError::invalid("survival core not inside the enclosure"));
            }
            let (floor, _) = survival_floor(&sub, &core, *rho_sv, t_grid)?;
            Ok(floor - c + REVERIFY_SLACK)
        }
    }
}
