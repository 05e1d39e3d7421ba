//! Escape from the transitory domain of the adaptation diffusion.
//!
//! Points are `(x, y)` with `y = 2√n/σ_N`. Outside the coupling domain
//! `Δ_c = B(0, n_c) × (1/n_c, n_c]` the state space splits into three
//! regions, from each of which the process must leave with an exponential
//! moment.

use serde::{Deserialize, Serialize};

use super::diffusion::{norm, run_diffusion, DiffusionSpec, PathEnd, SimConfig};
use crate::error::{QsdError, Result};
use crate::mc::rng::{derive_seed, mean_stderr, par_paths};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    CouplingDomain,
    /// Large population: `(B^c × (y∞, ∞)) ∪ (B × (n_c, ∞))`.
    YInfinity,
    /// Small population: `B × [0, 1/n_c]`.
    Zero,
    /// Far trait: `B^c × [0, y∞]`.
    XInfinity,
}

impl Region {
    pub const TRANSITORY: [Region; 3] = [Region::YInfinity, Region::XInfinity, Region::Zero];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitoryDecomposition {
    pub y_inf: f64,
    pub n_c: f64,
}

impl TransitoryDecomposition {
    pub fn new(y_inf: f64, n_c: f64) -> Result<Self> {
        if !(y_inf > 0.0 && n_c > y_inf && n_c.is_finite()) {
            return Err(QsdError::invalid(format!(
                "need n_c > y_inf > 0, got n_c = {n_c}, y_inf = {y_inf}"
            )));
        }
        if y_inf * n_c <= 1.0 {
            return Err(QsdError::invalid(
                "need y_inf > 1/n_c so the far-trait region is non-empty",
            ));
        }
        Ok(Self { y_inf, n_c })
    }

    pub fn region(&self, x: &[f64], y: f64) -> Region {
        let inside = norm(x) < self.n_c;
        match (inside, y) {
            (true, y) if y > self.n_c => Region::YInfinity,
            (true, y) if y <= 1.0 / self.n_c => Region::Zero,
            (true, _) => Region::CouplingDomain,
            (false, y) if y > self.y_inf => Region::YInfinity,
            (false, _) => Region::XInfinity,
        }
    }

    /// Start points for a region: a small grid along the first trait axis
    /// reaching across the region boundaries.
    pub fn start_grid(&self, region: Region, dim: usize) -> Vec<(Vec<f64>, f64)> {
        let nc = self.n_c;
        let yi = self.y_inf;
        let axis = |r: f64| {
            let mut x = vec![0.0; dim];
            x[0] = r;
            x
        };
        let product = |xs: &[f64], ys: &[f64]| -> Vec<(Vec<f64>, f64)> {
            xs.iter()
                .flat_map(|&r| ys.iter().map(move |&y| (axis(r), y)))
                .collect()
        };
        let mut pts = match region {
            Region::CouplingDomain => product(&[0.0, 0.5 * nc], &[0.5 * (1.0 / nc + nc)]),
            Region::YInfinity => {
                let mut p = product(
                    &[0.0, 0.5 * nc, 0.95 * nc],
                    &[1.05 * nc, 2.0 * nc, 8.0 * nc],
                );
                p.extend(product(
                    &[1.05 * nc, 1.5 * nc],
                    &[1.05 * yi, 2.0 * yi, 8.0 * nc],
                ));
                p
            }
            Region::Zero => product(
                &[0.0, 0.5 * nc, 0.95 * nc],
                &[0.25 / nc, 0.5 / nc, 1.0 / nc],
            ),
            Region::XInfinity => {
                product(&[1.05 * nc, 1.5 * nc, 2.0 * nc], &[0.5 / nc, 0.5 * yi, yi])
            }
        };
        pts.retain(|(x, y)| self.region(x, *y) == region);
        pts
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentConfig {
    pub rho: f64,
    pub n_paths: usize,
    pub dt: f64,
    /// Paths still running at this time count with `V = t_cap`.
    pub t_cap: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartEstimate {
    pub x: Vec<f64>,
    pub y: f64,
    pub mean: f64,
    pub stderr: f64,
    /// Paths that hit the time cap: the moment may be infinite.
    pub capped: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionEstimate {
    pub region: Region,
    pub rho: f64,
    pub rows: Vec<StartEstimate>,
    /// Largest estimate over the start grid, with its standard error.
    pub estimate: f64,
    pub stderr: f64,
    pub capped: usize,
}

/// Monte Carlo `sup_{start} E[exp(ρ V)]` with `V` the hitting time of the
/// coupling domain or absorption, whichever comes first.
pub fn escape_moment_mc(
    spec: &DiffusionSpec,
    decomp: &TransitoryDecomposition,
    region: Region,
    starts: &[(Vec<f64>, f64)],
    cfg: &MomentConfig,
) -> Result<RegionEstimate> {
    spec.validate()?;
    if starts.is_empty() || cfg.n_paths == 0 {
        return Err(QsdError::invalid(
            "need at least one start point and one path",
        ));
    }
    if !(cfg.rho >= 0.0 && cfg.t_cap > 0.0) {
        return Err(QsdError::invalid("rho must be >= 0 and t_cap > 0"));
    }
    let sim = SimConfig {
        dt: cfg.dt,
        t_max: cfg.t_cap,
    };
    let total = starts.len() * cfg.n_paths;
    let values = par_paths(cfg.seed, total, |i, rng| -> Result<(f64, bool)> {
        let (x0, y0) = &starts[i / cfg.n_paths];
        let n0 = spec.to_n(*y0);
        if decomp.region(x0, *y0) == Region::CouplingDomain || n0 <= spec.eps_abs() {
            return Ok((1.0, false));
        }
        let end = run_diffusion(spec, x0, n0, &sim, rng, |x, n, _| {
            decomp.region(x, spec.to_y(n)) == Region::CouplingDomain
        })?;
        Ok(((cfg.rho * end.t).exp(), end.end == PathEnd::Horizon))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let rows: Vec<StartEstimate> = starts
        .iter()
        .zip(values.chunks(cfg.n_paths))
        .map(|((x, y), chunk)| {
            let vals: Vec<f64> = chunk.iter().map(|v| v.0).collect();
            let (mean, stderr) = mean_stderr(&vals);
            StartEstimate {
                x: x.clone(),
                y: *y,
                mean,
                stderr,
                capped: chunk.iter().filter(|v| v.1).count(),
            }
        })
        .collect();
    let worst = rows
        .iter()
        .max_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("non-empty start grid");
    Ok(RegionEstimate {
        region,
        rho: cfg.rho,
        estimate: worst.mean,
        stderr: worst.stderr,
        capped: rows.iter().map(|r| r.capped).sum(),
        rows,
    })
}

/// Escape moments of the three regions for one decomposition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentTriple {
    pub decomposition: TransitoryDecomposition,
    pub y_infinity: RegionEstimate,
    pub x_infinity: RegionEstimate,
    pub zero: RegionEstimate,
}

impl MomentTriple {
    /// Estimate of `e_T`, the supremum over the whole transitory domain.
    pub fn e_t(&self) -> f64 {
        self.y_infinity
            .estimate
            .max(self.x_infinity.estimate)
            .max(self.zero.estimate)
    }
}

pub fn estimate_moments(
    spec: &DiffusionSpec,
    decomp: &TransitoryDecomposition,
    cfg: &MomentConfig,
) -> Result<MomentTriple> {
    let run = |region: Region, tag: u64| {
        let starts = decomp.start_grid(region, spec.dim);
        let cfg = MomentConfig {
            seed: derive_seed(cfg.seed, tag),
            ..cfg.clone()
        };
        escape_moment_mc(spec, decomp, region, &starts, &cfg)
    };
    Ok(MomentTriple {
        decomposition: *decomp,
        y_infinity: run(Region::YInfinity, 1)?,
        x_infinity: run(Region::XInfinity, 2)?,
        zero: run(Region::Zero, 3)?,
    })
}

/// Constants linking the three escape moments, estimated from data (they
/// are existential in the theory).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkedConstants {
    pub c_y: f64,
    pub eps_x: f64,
    pub c_x: f64,
    pub eps_0: f64,
    pub c_0: f64,
}

impl LinkedConstants {
    /// The smallest constants (at least 1) for which the three linked
    /// inequalities hold on `fit`, with `ε^X = 1/(2C^Y)` and
    /// `ε^0 = 1/(8C^Y C^X)` so that the combination argument applies.
    pub fn fit(fit: &[MomentTriple]) -> Result<Self> {
        if fit.is_empty() {
            return Err(QsdError::invalid("no data to fit linked constants"));
        }
        let est = |t: &MomentTriple| {
            (
                t.y_infinity.estimate,
                t.x_infinity.estimate,
                t.zero.estimate,
            )
        };
        let c_y = fit
            .iter()
            .map(|t| {
                let (ey, ex, _) = est(t);
                ey / (1.0 + ex)
            })
            .fold(1.0, f64::max);
        let eps_x = 1.0 / (2.0 * c_y);
        let c_x = fit
            .iter()
            .map(|t| {
                let (ey, ex, e0) = est(t);
                (ex - eps_x * ey) / (1.0 + e0)
            })
            .fold(1.0, f64::max);
        let eps_0 = 1.0 / (8.0 * c_y * c_x);
        let c_0 = fit
            .iter()
            .map(|t| {
                let (ey, ex, e0) = est(t);
                e0 - eps_0 * (ey + ex)
            })
            .fold(1.0, f64::max);
        Ok(Self {
            c_y,
            eps_x,
            c_x,
            eps_0,
            c_0,
        })
    }

    /// `12·C^Y·C^X·C_0`.
    pub fn combined_bound(&self) -> f64 {
        12.0 * self.c_y * self.c_x * self.c_0
    }
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkedCheck {
    pub n_c: f64,
    pub y_inf: f64,
    /// Each inequality holds unless its left side's lower 95% bound exceeds
    /// its right side's upper 95% bound.
    pub y_ok: bool,
    pub x_ok: bool,
    pub zero_ok: bool,
    pub e_t: f64,
    pub combined_ok: bool,
}

impl LinkedCheck {
    pub fn all(&self) -> bool {
        self.y_ok && self.x_ok && self.zero_ok && self.combined_ok
    }
}

pub fn check_linked(k: &LinkedConstants, data: &[MomentTriple]) -> Vec<LinkedCheck> {
    data.iter()
        .map(|t| {
            let lo = |e: &RegionEstimate| e.estimate - Z95 * e.stderr;
            let hi = |e: &RegionEstimate| e.estimate + Z95 * e.stderr;
            let (y, x, z) = (&t.y_infinity, &t.x_infinity, &t.zero);
            LinkedCheck {
                n_c: t.decomposition.n_c,
                y_inf: t.decomposition.y_inf,
                y_ok: lo(y) <= k.c_y * (1.0 + hi(x)),
                x_ok: lo(x) <= k.c_x * (1.0 + hi(z)) + k.eps_x * hi(y),
                zero_ok: lo(z) <= k.c_0 + k.eps_0 * (hi(y) + hi(x)),
                e_t: t.e_t(),
                combined_ok: lo(y).max(lo(x)).max(lo(z)) <= k.combined_bound(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeStudy {
    pub rho: f64,
    pub triples: Vec<MomentTriple>,
    /// Constants fitted on the even-indexed decompositions only.
    pub constants: LinkedConstants,
    /// Checks on the held-out (odd-indexed) decompositions.
    pub held_out: Vec<LinkedCheck>,
    /// Checks on every decomposition.
    pub all: Vec<LinkedCheck>,
}

impl EscapeStudy {
    pub fn passes(&self) -> bool {
        self.all.iter().all(LinkedCheck::all)
    }
}

/// Estimates the three moments for each coupling radius in `n_cs`, fits the
/// linking constants on every other radius and checks the inequalities on
/// the rest as well as on all data.
pub fn escape_study(
    spec: &DiffusionSpec,
    y_inf: f64,
    n_cs: &[f64],
    cfg: &MomentConfig,
) -> Result<EscapeStudy> {
    if !spec.r_decays() {
        return Err(QsdError::invalid("the growth rate must decay at infinity"));
    }
    let triples = n_cs
        .iter()
        .enumerate()
        .map(|(i, &n_c)| {
            let decomp = TransitoryDecomposition::new(y_inf, n_c)?;
            let cfg = MomentConfig {
                seed: derive_seed(cfg.seed, 100 + i as u64),
                ..cfg.clone()
            };
            estimate_moments(spec, &decomp, &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let fit: Vec<MomentTriple> = triples.iter().step_by(2).cloned().collect();
    let test: Vec<MomentTriple> = triples.iter().skip(1).step_by(2).cloned().collect();
    let constants = LinkedConstants::fit(&fit)?;
    Ok(EscapeStudy {
        rho: cfg.rho,
        held_out: check_linked(&constants, &test),
        all: check_linked(&constants, &triples),
        constants,
        triples,
    })
}
