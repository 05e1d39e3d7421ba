use serde::{Deserialize, Serialize};

use super::checks::survival_ratio_max;
use super::retention::retention_infimum;
use super::{indicator, CertificateSet, Exhaustion, Witness, PADDING};
use crate::coupling::CouplingConstants;
use crate::eigen::{solve_eigentriple, spectral_gap, DEFAULT_MAX_ITER};
use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::grid::{log_grid, PER_DECADE};
use crate::semigroup::{Uniformizer, DEFAULT_TOL};

/// Candidate renewal levels, tried from the largest down.
const XI_LADDER: [f64; 24] = [
    0.99, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7, 0.65, 0.6, 0.55, 0.5, 0.45, 0.4, 0.35, 0.3, 0.25, 0.2,
    0.15, 0.1, 0.05, 0.02, 0.01, 1e-3, 1e-4,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsOptions {
    /// Level `n` of the initial class `{μ : μ(D_n) ≥ ξ}`; defaults to the
    /// full state set.
    pub initial_level: Option<usize>,
    pub initial_xi: f64,
    /// Longest time searched; defaults to 40 relaxation times of the gap.
    pub t_max: Option<f64>,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        Self {
            initial_level: None,
            initial_xi: 1.0,
            t_max: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub coupling: CouplingConstants,
    pub zeta: f64,
    /// `C(n, ξ) = 2·exp[ζ(t_ps + t_db + t_xt)]`.
    pub prefactor: f64,
    /// Renewal level index and mass: laws with `μ(D_rn) ≥ ξ_rn` are minorized.
    pub n_rn: usize,
    pub xi_rn: f64,
    pub initial_level: usize,
    pub initial_xi: f64,
    pub c_mix: f64,
    pub c_ps_raw: f64,
    /// Worst renewal value `(μA_{t_db}(D_rn) - c_db)/(1 - c_db)` over the class.
    pub renewal_value: f64,
    /// `c_ps · sup_{t ≥ t_ps} e^{λ₀t} P_{α_c}(t < ext)`, padded.
    pub c_ps_prime: f64,
    /// `max(c'_ps, e^{λ₀ t_ps})`: a bound on `sup_t ‖η_t‖_∞`.
    pub eta_sup_bound: f64,
    pub rho_sv: f64,
    pub rho_et: f64,
    pub e_t: f64,
    pub lambda0: f64,
    pub spectral_gap: f64,
    pub t_max: f64,
}

/// Worst renewal value `(inf_μ μA_t(D) - c)/(1 - c)` for the class
/// `{μ : μ(D) ≥ ξ}` with `c = c_mix·ξ`.
pub fn renewal_floor(hit: &[f64], alive: &[f64], domain: &[usize], xi: f64, c_mix: f64) -> f64 {
    let c = c_mix * xi;
    (retention_infimum(hit, alive, domain, xi) - c) / (1.0 - c)
}

fn violated(msg: impl Into<String>) -> QsdError {
    QsdError::AssumptionViolated(msg.into())
}

pub fn derive_coupling_constants(
    gen: &SubMarkovGenerator,
    exh: &Exhaustion,
    certs: &CertificateSet,
    opts: &ConstantsOptions,
) -> Result<DerivedConstants> {
    exh.validate(gen.len())?;
    let failing: Vec<String> = certs
        .iter()
        .filter(|c| !c.holds())
        .map(|c| format!("{:?}", c.kind()))
        .collect();
    if !failing.is_empty() {
        return Err(violated(format!(
            "failing certificates: {}",
            failing.join(", ")
        )));
    }
    let Witness::Mix {
        n: n_rn,
        t: t_db,
        c: c_mix,
        ..
    } = certs.mix.witness
    else {
        return Err(QsdError::invalid("mix slot holds a different certificate"));
    };
    let alpha_c = certs
        .mix
        .alpha_c
        .clone()
        .ok_or_else(|| QsdError::invalid("mixing certificate without alpha_c"))?;
    let Witness::Sv { rho_sv, .. } = certs.sv.witness else {
        return Err(QsdError::invalid("sv slot holds a different certificate"));
    };
    let Witness::ET {
        rho: rho_et, e_t, ..
    } = certs.et.witness
    else {
        return Err(QsdError::invalid("eT slot holds a different certificate"));
    };
    if rho_et <= rho_sv {
        return Err(violated(format!(
            "escape rate {rho_et} does not exceed the survival rate {rho_sv}"
        )));
    }
    let initial_level = opts.initial_level.unwrap_or(exh.len() - 1);
    if initial_level >= exh.len() || !(opts.initial_xi > 0.0 && opts.initial_xi <= 1.0) {
        return Err(QsdError::invalid("initial class outside the exhaustion"));
    }

    let eigen = solve_eigentriple(gen, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let gap = spectral_gap(gen, &eigen, 1e-13, DEFAULT_MAX_ITER).unwrap_or(eigen.lambda0);
    let t_max = opts
        .t_max
        .unwrap_or_else(|| (40.0 / gap.max(1e-6)).clamp(10.0 * t_db, 1e4));
    let t_min = (t_db / 100.0).min(1e-2);
    let grid = log_grid(t_min, t_max, PER_DECADE)?;
    let uni = Uniformizer::new(gen);
    let all: Vec<usize> = (0..gen.len()).collect();

    // Persistence: sup_x P_x(t)/P_{α_c}(t) settles to its limit.
    let ratios: Vec<f64> = survival_ratio_max(&uni, &alpha_c, &grid, &all)?
        .into_iter()
        .map(|p| p.0)
        .collect();
    let denom = alpha_c.dot(&eigen.eta);
    let limit = eigen
        .eta
        .iter()
        .map(|e| e / denom)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut tail = vec![limit; grid.len() + 1];
    for i in (0..grid.len()).rev() {
        tail[i] = tail[i + 1].max(ratios[i]);
    }
    let i_ps = (0..grid.len())
        .find(|&i| tail[i] <= PADDING * limit)
        .ok_or_else(|| violated("persistence ratio does not settle on the grid"))?;
    let t_ps = grid[i_ps];
    let c_ps_raw = tail[i_ps];
    let c_ps = c_ps_raw * PADDING;

    // η bound: e^{λ₀t} P_{α_c}(t) after t_ps, then the limit ⟨α_c|η⟩.
    let alive = uni.right_curve_scaled(&vec![1.0; gen.len()], &grid, DEFAULT_TOL)?;
    let alpha_growth = alive[i_ps..]
        .iter()
        .zip(&grid[i_ps..])
        .map(|(s, &t)| (alpha_c.dot(&s.vector).ln() + s.log_scale + eigen.lambda0 * t).exp())
        .fold(denom, f64::max);
    let c_ps_prime = c_ps * alpha_growth * PADDING;
    let eta_sup_bound = c_ps_prime.max((eigen.lambda0 * t_ps).exp());

    // Renewal: the largest ξ for which minorized laws stay in the class.
    let d_rn = exh.set(n_rn);
    let hit = uni.evolve_right(&indicator(d_rn, gen.len()), t_db, DEFAULT_TOL)?;
    let live = uni.evolve_right(&vec![1.0; gen.len()], t_db, DEFAULT_TOL)?;
    let scale = (hit.log_scale - live.log_scale).exp();
    let hit_v: Vec<f64> = hit.vector.iter().map(|h| h * scale).collect();
    let (xi_rn, renewal_value) = XI_LADDER
        .iter()
        .map(|&xi| (xi, renewal_floor(&hit_v, &live.vector, d_rn, xi, c_mix)))
        .find(|&(xi, v)| v >= xi)
        .ok_or_else(|| violated("no renewal level keeps minorized laws in the class"))?;
    let c_db = c_mix * xi_rn;

    // Relaxation into the renewal class from the initial class.
    let d0 = exh.set(initial_level);
    let mut times = vec![0.0];
    times.extend(&grid);
    let hits = uni.right_curve_scaled(&indicator(d_rn, gen.len()), &grid, DEFAULT_TOL)?;
    let mut retention = vec![retention_infimum(
        &indicator(d_rn, gen.len()),
        &vec![1.0; gen.len()],
        d0,
        opts.initial_xi,
    )];
    for (h, a) in hits.iter().zip(&alive) {
        let s = (h.log_scale - a.log_scale).exp();
        let hv: Vec<f64> = h.vector.iter().map(|x| x * s).collect();
        retention.push(retention_infimum(&hv, &a.vector, d0, opts.initial_xi));
    }
    let i_xt = match retention.iter().rposition(|&r| r < xi_rn) {
        None => 0,
        Some(i) if i + 1 < retention.len() => i + 1,
        Some(_) => {
            return Err(violated(
                "initial class never relaxes into the renewal class",
            ))
        }
    };
    let t_xt = times[i_xt];

    let coupling = CouplingConstants::new(t_db, c_db, t_ps, c_ps, t_xt, alpha_c)?;
    Ok(DerivedConstants {
        zeta: coupling.zeta(),
        prefactor: coupling.prefactor(),
        coupling,
        n_rn,
        xi_rn,
        initial_level,
        initial_xi: opts.initial_xi,
        c_mix,
        c_ps_raw,
        renewal_value,
        c_ps_prime,
        eta_sup_bound,
        rho_sv,
        rho_et,
        e_t: e_t.unwrap_or(f64::MAX),
        lambda0: eigen.lambda0,
        spectral_gap: gap,
        t_max,
    })
}
