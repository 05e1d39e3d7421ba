//! Step-by-step coupling of an arbitrary initial law with the minorizing
//! measure `α_c`, run on exact survival probabilities.
//!
//! At step `j` the conditioned law `μA_{j·t_db}` is split into pieces already
//! coupled to `α_c` (weights `a_μ(k, j·t_db)`) and a residual `r_j·ν_j`. Each
//! step moves a fraction `c_j` of the residual onto `α_c`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::semigroup::{Uniformizer, DEFAULT_TOL};
use crate::vector::{tv_slices, ProbabilityVector};

/// Equalities of the construction are checked to this accuracy.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Negative entries above `-CLAMP_TOL` are round-off and clamped to zero.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingConstants {
    pub t_db: f64,
    pub c_db: f64,
    pub t_ps: f64,
    pub c_ps: f64,
    pub t_xt: f64,
    pub alpha_c: ProbabilityVector,
}

impl CouplingConstants {
    pub fn new(
        t_db: f64,
        c_db: f64,
        t_ps: f64,
        c_ps: f64,
        t_xt: f64,
        alpha_c: ProbabilityVector,
    ) -> Result<Self> {
        let c = Self {
            t_db,
            c_db,
            t_ps,
            c_ps,
            t_xt,
            alpha_c,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_db > 0.0 && self.t_ps > 0.0 && self.t_db.is_finite() && self.t_ps.is_finite()) {
            return Err(QsdError::invalid("t_db and t_ps must be finite and > 0"));
        }
        if !(self.t_xt >= 0.0 && self.t_xt.is_finite()) {
            return Err(QsdError::invalid("t_xt must be finite and >= 0"));
        }
        if !(self.c_db > 0.0 && self.c_db <= 1.0) {
            return Err(QsdError::invalid("c_db must lie in (0, 1]"));
        }
        let c_bar = self.c_bar();
        if !(c_bar > 0.0 && c_bar < 1.0) {
            return Err(QsdError::invalid(format!(
                "c_db/c_ps = {c_bar} must lie in (0, 1)"
            )));
        }
        if !self.alpha_c.is_strict() {
            return Err(QsdError::invalid("alpha_c must be a probability vector"));
        }
        Ok(())
    }

    /// Fraction of the residual coupled per step, `c_db / c_ps`.
    pub fn c_bar(&self) -> f64 {
        self.c_db / self.c_ps
    }

    /// `-ln(1 - c̄)/t_db`.
    pub fn zeta(&self) -> f64 {
        -(1.0 - self.c_bar()).ln() / self.t_db
    }

    /// `2·exp[ζ(t_ps + t_db + t_xt)]`.
    pub fn prefactor(&self) -> f64 {
        2.0 * (self.zeta() * (self.t_ps + self.t_db + self.t_xt)).exp()
    }
}

/// `⌊(t_h - t_ps)/t_db⌋`.
pub fn horizon_steps(t_h: f64, consts: &CouplingConstants) -> Result<usize> {
    if !(t_h > consts.t_ps) {
        return Err(QsdError::HorizonTooShort {
            t_h,
            t_ps: consts.t_ps,
        });
    }
    // The nudge keeps exact multiples from rounding down.
    Ok(((t_h - consts.t_ps) / consts.t_db + 1e-9).floor() as usize)
}

/// Log-survival evaluations `ln P_v(t < ext)`.
struct Survival<'a> {
    uni: &'a Uniformizer,
}

impl Survival<'_> {
    fn ln(&self, v: &[f64], t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(v.iter().sum::<f64>().ln());
        }
        Ok(self.uni.evolve_left(v, t, DEFAULT_TOL)?.log_mass())
    }

    /// `v A_t` and `ln P_v(t < ext)`.
    fn conditioned(&self, v: &[f64], t: f64) -> Result<(Vec<f64>, f64)> {
        let s = self.uni.evolve_left(v, t, DEFAULT_TOL)?;
        let total: f64 = s.vector.iter().sum();
        if !(total > 0.0) {
            return Err(QsdError::ExtinctMass { mass: 0.0 });
        }
        Ok((s.vector.iter().map(|x| x / total).collect(), s.log_mass()))
    }
}

fn mass_with(
    surv: &Survival,
    consts: &CouplingConstants,
    mu: &[f64],
    k: usize,
    t: f64,
    t_h: f64,
    big_j: usize,
) -> Result<f64> {
    let kt = k as f64 * consts.t_db;
    if k == 0 || k > big_j || kt > t + 1e-12 {
        return Ok(0.0);
    }
    let c_bar = consts.c_bar();
    let a = consts.alpha_c.weights();
    let log = (k as f64 - 1.0) * (1.0 - c_bar).ln() + surv.ln(mu, t_h)? - surv.ln(mu, t)?
        + surv.ln(a, (t - kt).max(0.0))?
        - surv.ln(a, t_h - kt)?;
    Ok(c_bar * log.exp())
}

/// Mass `a_μ(k, t)` attached to the `k`-th coupling step, for horizon `t_h`.
pub fn coupling_mass(
    gen: &SubMarkovGenerator,
    consts: &CouplingConstants,
    mu: &ProbabilityVector,
    k: usize,
    t: f64,
    t_h: f64,
) -> Result<f64> {
    gen.check_dim(mu.len())?;
    let big_j = horizon_steps(t_h, consts)?;
    let uni = Uniformizer::new(gen);
    mass_with(
        &Survival { uni: &uni },
        consts,
        mu.weights(),
        k,
        t,
        t_h,
        big_j,
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingState {
    pub j: usize,
    /// Residual weight `r_j`.
    pub r: f64,
    /// Residual law `ν_j`.
    pub nu: ProbabilityVector,
    /// `a_μ(k, j·t_db)` for `k = 1..=j`.
    pub a: Vec<f64>,
    /// Coupled fractions `c_0, …, c_{j-1}` used so far.
    pub c_used: Vec<f64>,
    pub t_h: f64,
    pub big_j: usize,
    /// Initial law.
    pub mu: ProbabilityVector,
    /// Entries clamped from tiny negative values to zero.
    pub clamped: usize,
}

impl CouplingState {
    pub fn start(mu: &ProbabilityVector, t_h: f64, consts: &CouplingConstants) -> Result<Self> {
        consts.validate()?;
        if mu.len() != consts.alpha_c.len() {
            return Err(QsdError::DimensionMismatch {
                expected: consts.alpha_c.len(),
                got: mu.len(),
            });
        }
        if !mu.is_strict() {
            return Err(QsdError::invalid(
                "initial law must be a probability vector",
            ));
        }
        Ok(Self {
            j: 0,
            r: 1.0,
            nu: mu.clone(),
            a: Vec::new(),
            c_used: Vec::new(),
            t_h,
            big_j: horizon_steps(t_h, consts)?,
            mu: mu.clone(),
            clamped: 0,
        })
    }

    pub fn is_final(&self) -> bool {
        self.j >= self.big_j
    }
}

fn broken(state: &CouplingState, reason: String) -> QsdError {
    QsdError::InductionBroken {
        reason,
        state: Box::new(state.clone()),
    }
}

/// One coupling step `j → j+1`.
pub fn advance(
    state: &CouplingState,
    gen: &SubMarkovGenerator,
    consts: &CouplingConstants,
) -> Result<CouplingState> {
    gen.check_dim(state.nu.len())?;
    if state.is_final() {
        return Err(QsdError::invalid(format!(
            "step {} is already the last of {}",
            state.j, state.big_j
        )));
    }
    let uni = Uniformizer::new(gen);
    let surv = Survival { uni: &uni };
    let t_db = consts.t_db;
    let j = state.j as f64;
    let nu = state.nu.weights();
    let alpha = consts.alpha_c.weights();

    let (nu_a, ln_nu_db) = surv.conditioned(nu, t_db)?;
    let ln_nu_h = surv.ln(nu, state.t_h - j * t_db)?;
    let ln_alpha = surv.ln(alpha, state.t_h - (j + 1.0) * t_db)?;
    let c_j = consts.c_bar() * (ln_nu_h - ln_nu_db - ln_alpha).exp();
    if !(c_j > 0.0) {
        return Err(broken(
            state,
            format!("coupled fraction {c_j} is not positive"),
        ));
    }
    if c_j > consts.c_db + CLAMP_TOL {
        return Err(broken(
            state,
            format!("coupled fraction {c_j} exceeds c_db = {}", consts.c_db),
        ));
    }
    let mut clamped = state.clamped;
    let mut next = Vec::with_capacity(nu.len());
    for (y, (v, a)) in nu_a.iter().zip(alpha).enumerate() {
        let w = (v - c_j * a) / (1.0 - c_j);
        if w < -CLAMP_TOL {
            return Err(broken(
                state,
                format!("residual law negative at state {y} ({w:e})"),
            ));
        }
        if w < 0.0 {
            clamped += 1;
        }
        next.push(w.max(0.0));
    }
    let mu = state.mu.weights();
    let ln_ratio = surv.ln(mu, j * t_db)? - surv.ln(mu, (j + 1.0) * t_db)?;
    let ell = state.r * (ln_ratio + ln_nu_db).exp();
    let r = ell * (1.0 - c_j);
    if !(r > 0.0) {
        return Err(broken(
            state,
            format!("residual weight {r} is not positive"),
        ));
    }
    let t_next = (j + 1.0) * t_db;
    let a = (1..=state.j + 1)
        .map(|k| mass_with(&surv, consts, mu, k, t_next, state.t_h, state.big_j))
        .collect::<Result<Vec<_>>>()?;
    let mut c_used = state.c_used.clone();
    c_used.push(c_j);
    Ok(CouplingState {
        j: state.j + 1,
        r,
        nu: ProbabilityVector::from_computed(next),
        a,
        c_used,
        t_h: state.t_h,
        big_j: state.big_j,
        mu: state.mu.clone(),
        clamped,
    })
}

/// `|r_j - (1-c̄)^j · P_μ(t_h)/P_μ(j·t_db) / P_{ν_j}(t_h - j·t_db)|`.
pub fn residual_identity(
    state: &CouplingState,
    gen: &SubMarkovGenerator,
    consts: &CouplingConstants,
) -> Result<f64> {
    let uni = Uniformizer::new(gen);
    let surv = Survival { uni: &uni };
    let jt = state.j as f64 * consts.t_db;
    let mu = state.mu.weights();
    let log = state.j as f64 * (1.0 - consts.c_bar()).ln() + surv.ln(mu, state.t_h)?
        - surv.ln(mu, jt)?
        - surv.ln(state.nu.weights(), state.t_h - jt)?;
    Ok((state.r - log.exp()).abs())
}

/// `|Σ_k a_μ(k, j·t_db) + r_j - 1|`.
pub fn mass_defect(state: &CouplingState) -> f64 {
    (state.a.iter().sum::<f64>() + state.r - 1.0).abs()
}

/// L1 distance between `μA_{j·t_db}` and its decomposition
/// `Σ_k a_μ(k, j·t_db)·α_c A_{(j-k)t_db} + r_j ν_j`.
pub fn reconstruction_error(
    state: &CouplingState,
    gen: &SubMarkovGenerator,
    consts: &CouplingConstants,
) -> Result<f64> {
    let uni = Uniformizer::new(gen);
    let surv = Survival { uni: &uni };
    let jt = state.j as f64 * consts.t_db;
    let target = if state.j == 0 {
        state.mu.weights().to_vec()
    } else {
        surv.conditioned(state.mu.weights(), jt)?.0
    };
    let mut sum: Vec<f64> = state.nu.weights().iter().map(|v| state.r * v).collect();
    for (k, a) in (1..=state.j).zip(&state.a) {
        let s = (state.j - k) as f64 * consts.t_db;
        let piece = if s > 0.0 {
            surv.conditioned(consts.alpha_c.weights(), s)?.0
        } else {
            consts.alpha_c.weights().to_vec()
        };
        sum.iter_mut().zip(piece).for_each(|(x, p)| *x += a * p);
    }
    Ok(sum.iter().zip(&target).map(|(x, y)| (x - y).abs()).sum())
}

/// `α_c[t_h] = Σ_{k=1}^{J} c̄(1-c̄)^{k-1} α_c A_{t_h - k·t_db}`, a
/// sub-probability of mass `1 - (1-c̄)^J`.
pub fn minorizing_measure(
    gen: &SubMarkovGenerator,
    consts: &CouplingConstants,
    t_h: f64,
) -> Result<ProbabilityVector> {
    gen.check_dim(consts.alpha_c.len())?;
    let big_j = horizon_steps(t_h, consts)?;
    let uni = Uniformizer::new(gen);
    let surv = Survival { uni: &uni };
    let c_bar = consts.c_bar();
    let mut out = vec![0.0; gen.len()];
    for k in 1..=big_j {
        let w = c_bar * (1.0 - c_bar).powi(k as i32 - 1);
        let s = t_h - k as f64 * consts.t_db;
        let piece = surv.conditioned(consts.alpha_c.weights(), s)?.0;
        out.iter_mut().zip(piece).for_each(|(o, p)| *o += w * p);
    }
    Ok(ProbabilityVector::from_computed(out))
}

/// One line of the induction trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub j: usize,
    pub r: f64,
    /// Fraction used to reach step `j` (absent at `j = 0`).
    pub c: Option<f64>,
    pub nu_min: f64,
    pub residual_identity: f64,
    pub mass_defect: f64,
    pub reconstruction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingRun {
    pub trace: Vec<TraceRow>,
    pub last: CouplingState,
}

impl CouplingRun {
    pub fn max_identity_deviation(&self) -> f64 {
        self.trace
            .iter()
            .map(|r| r.residual_identity.max(r.mass_defect).max(r.reconstruction))
            .fold(0.0, f64::max)
    }

    pub fn trace_csv(&self) -> String {
        let mut s = String::from("j,r,c,nu_min,residual_identity,mass_defect,reconstruction\n");
        for r in &self.trace {
            s.push_str(&format!(
                "{},{:e},{},{:e},{:e},{:e},{:e}\n",
                r.j,
                r.r,
                r.c.map_or(String::new(), |c| format!("{c:e}")),
                r.nu_min,
                r.residual_identity,
                r.mass_defect,
                r.reconstruction
            ));
        }
        s
    }
}

fn trace_row(
    state: &CouplingState,
    gen: &SubMarkovGenerator,
    consts: &CouplingConstants,
) -> Result<TraceRow> {
    Ok(TraceRow {
        j: state.j,
        r: state.r,
        c: state.c_used.last().copied(),
        nu_min: state
            .nu
            .weights()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min),
        residual_identity: residual_identity(state, gen, consts)?,
        mass_defect: mass_defect(state),
        reconstruction: reconstruction_error(state, gen, consts)?,
    })
}

/// Runs all `J(t_h)` steps from `μ`, recording identity deviations. An
/// identity off by more than `IDENTITY_TOL` breaks the induction.
pub fn run_coupling(
    gen: &SubMarkovGenerator,
    consts: &CouplingConstants,
    mu: &ProbabilityVector,
    t_h: f64,
) -> Result<CouplingRun> {
    let mut state = CouplingState::start(mu, t_h, consts)?;
    let mut trace = vec![trace_row(&state, gen, consts)?];
    while !state.is_final() {
        state = advance(&state, gen, consts)?;
        let row = trace_row(&state, gen, consts)?;
        let worst = row
            .residual_identity
            .max(row.mass_defect)
            .max(row.reconstruction);
        if worst > IDENTITY_TOL {
            return Err(broken(
                &state,
                format!("identity deviation {worst:e} at step {}", state.j),
            ));
        }
        trace.push(row);
    }
    Ok(CouplingRun { trace, last: state })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub mu_index: usize,
    pub t1: f64,
    pub t2: f64,
    /// Coupling steps available at horizon `t1 - t_xt`.
    pub steps: usize,
    /// `min_y (μA_{t2} - α_c[t1 - t_xt])(y)`.
    pub min_slack: f64,
    pub worst_state: usize,
    /// `‖μA_{t2} - μA_{t1}‖_TV`.
    pub tv_measured: f64,
    /// `2(1-c̄)^J`.
    pub tv_bound: f64,
    /// `C·e^{-ζ t1}`.
    pub rate_bound: f64,
    pub max_identity_deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub rows: Vec<LowerBoundRow>,
}

impl LowerBoundReport {
    /// First domination or bound failure, if any.
    pub fn check(&self) -> Result<()> {
        for r in &self.rows {
            if r.min_slack < -CLAMP_TOL {
                return Err(QsdError::DominationViolated {
                    state: r.worst_state,
                    deficit: -r.min_slack,
                });
            }
            if r.tv_measured > r.tv_bound + CLAMP_TOL || r.tv_bound > r.rate_bound * (1.0 + 1e-12) {
                return Err(QsdError::AssumptionViolated(format!(
                    "TV bound fails for law {} at ({}, {})",
                    r.mu_index, r.t1, r.t2
                )));
            }
        }
        Ok(())
    }
}

/// For every law and every pair `t1 <= t2`, checks `μA_{t2} ≥ α_c[t1 - t_xt]`
/// entrywise (after the initial relaxation `t_xt + t2 - t1`) and the TV
/// bounds `‖μA_{t2} - μA_{t1}‖ ≤ 2(1-c̄)^J ≤ C e^{-ζ t1}`.
pub fn verify_lower_bound(
    gen: &SubMarkovGenerator,
    consts: &CouplingConstants,
    mus: &[ProbabilityVector],
    t_pairs: &[(f64, f64)],
) -> Result<LowerBoundReport> {
    consts.validate()?;
    for &(t1, t2) in t_pairs {
        if !(0.0 <= t1 && t1 <= t2 && t2.is_finite()) {
            return Err(QsdError::invalid(format!("bad time pair ({t1}, {t2})")));
        }
    }
    let uni = Uniformizer::new(gen);
    let jobs: Vec<(usize, f64, f64)> = mus
        .iter()
        .enumerate()
        .flat_map(|(i, _)| t_pairs.iter().map(move |&(a, b)| (i, a, b)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(i, t1, t2)| {
            gen.check_dim(mus[i].len())?;
            let surv = Survival { uni: &uni };
            let mu = mus[i].weights();
            let at = |t: f64| -> Result<Vec<f64>> {
                if t == 0.0 {
                    Ok(mu.to_vec())
                } else {
                    Ok(surv.conditioned(mu, t)?.0)
                }
            };
            let law2 = at(t2)?;
            let law1 = at(t1)?;
            let t_h = t1 - consts.t_xt;
            let (steps, minor, deviation) = if t_h > consts.t_ps {
                let pre = at(consts.t_xt + (t2 - t1))?;
                let start = ProbabilityVector::from_computed(pre);
                let run = run_coupling(gen, consts, &start, t_h)?;
                let minor = minorizing_measure(gen, consts, t_h)?;
                (
                    run.last.j,
                    minor.into_weights(),
                    run.max_identity_deviation(),
                )
            } else {
                (0, vec![0.0; mu.len()], 0.0)
            };
            let (min_slack, worst_state) = law2
                .iter()
                .zip(&minor)
                .map(|(a, b)| a - b)
                .enumerate()
                .fold(
                    (f64::INFINITY, 0),
                    |acc, (y, d)| if d < acc.0 { (d, y) } else { acc },
                );
            let c_bar = consts.c_bar();
            Ok(LowerBoundRow {
                mu_index: i,
                t1,
                t2,
                steps,
                min_slack,
                worst_state,
                tv_measured: tv_slices(&law2, &law1),
                tv_bound: 2.0 * (1.0 - c_bar).powi(steps as i32),
                rate_bound: consts.prefactor() * (-consts.zeta() * t1).exp(),
                max_identity_deviation: deviation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LowerBoundReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve_eigentriple;

    fn golden() -> SubMarkovGenerator {
        SubMarkovGenerator::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)], vec![1.0, 0.0]).unwrap()
    }

    fn consts(alpha_c: ProbabilityVector, c_db: f64, c_ps: f64) -> CouplingConstants {
        CouplingConstants::new(1.0, c_db, 1.0, c_ps, 0.0, alpha_c).unwrap()
    }

    #[test]
    fn horizon_examples() {
        let a = ProbabilityVector::dirac(2, 0).unwrap();
        let c = CouplingConstants::new(2.0, 0.5, 1.0, 2.0, 0.0, a).unwrap();
        assert_eq!(horizon_steps(10.0, &c).unwrap(), 4);
        assert_eq!(horizon_steps(3.0, &c).unwrap(), 1);
        assert_eq!(horizon_steps(2.0, &c).unwrap(), 0);
        assert!(matches!(
            horizon_steps(1.0, &c),
            Err(QsdError::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn zeta_direct_evaluation() {
        let a = ProbabilityVector::dirac(1, 0).unwrap();
        let c = CouplingConstants::new(1.0, 0.5, 1.0, 2.0, 0.0, a).unwrap();
        assert!((c.zeta() - 0.287_682_072_451_780_9).abs() < 1e-12);
        assert!((c.prefactor() - 2.0 * (c.zeta() * 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn first_mass_at_horizon_is_c_bar() {
        let g = golden();
        let c = consts(ProbabilityVector::dirac(2, 1).unwrap(), 0.3, 2.0);
        let mu = ProbabilityVector::dirac(2, 0).unwrap();
        let t_h = 5.0;
        let a = coupling_mass(&g, &c, &mu, 1, t_h, t_h).unwrap();
        assert!((a - c.c_bar()).abs() < 1e-14);
        assert_eq!(coupling_mass(&g, &c, &mu, 5, t_h, t_h).unwrap(), 0.0);
        assert_eq!(coupling_mass(&g, &c, &mu, 2, 1.5, t_h).unwrap(), 0.0);
    }

    #[test]
    fn qsd_start_is_a_fixed_point() {
        let g = golden();
        let pair = solve_eigentriple(&g, 1e-13, 100_000).unwrap();
        let c = consts(pair.alpha.clone(), 0.4, 1.6);
        let run = run_coupling(&g, &c, &pair.alpha, 8.0).unwrap();
        assert_eq!(run.last.j, 7);
        for (j, row) in run.trace.iter().enumerate() {
            assert!((row.r - (1.0 - c.c_bar()).powi(j as i32)).abs() < 1e-10);
            if let Some(cj) = row.c {
                assert!((cj - c.c_bar()).abs() < 1e-10);
            }
        }
        assert!(crate::vector::tv_distance(&run.last.nu, &pair.alpha).unwrap() < 1e-10);
        let m = minorizing_measure(&g, &c, 8.0).unwrap();
        let mass = 1.0 - (1.0 - c.c_bar()).powi(7);
        assert!((m.mass() - mass).abs() < 1e-12);
        for (x, a) in m.weights().iter().zip(pair.alpha.weights()) {
            assert!((x - mass * a).abs() < 1e-10);
        }
    }

    #[test]
    fn minorizing_mass_closed_form() {
        let g = golden();
        let c = CouplingConstants::new(
            1.0,
            0.5,
            1.0,
            2.0,
            0.0,
            ProbabilityVector::dirac(2, 1).unwrap(),
        )
        .unwrap();
        let m = minorizing_measure(&g, &c, 5.0).unwrap();
        assert!((m.mass() - 0.683_593_75).abs() < 1e-12);
        assert_eq!(minorizing_measure(&g, &c, 1.5).unwrap().mass(), 0.0);
    }

    #[test]
    fn oversized_fraction_breaks_the_induction() {
        let g = golden();
        // c_ps far too small: c_j exceeds c_db on the first step.
        let c = consts(ProbabilityVector::dirac(2, 0).unwrap(), 0.9, 1.0 + 1e-9);
        let mu = ProbabilityVector::dirac(2, 1).unwrap();
        match run_coupling(&g, &c, &mu, 6.0) {
            Err(QsdError::InductionBroken { state, .. }) => assert_eq!(state.mu, mu),
            other => panic!("expected a broken induction, got {other:?}"),
        }
    }
}
