//! Birth–death chains with catastrophes on `{1, …, N}`; state `n` has index
//! `n - 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::generator::{SubMarkovGenerator, MAX_STATES};
use crate::semigroup::{Uniformizer, DEFAULT_TOL};
use crate::vector::{tv_slices, ProbabilityVector};

/// Rate as a function of the population size `n >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateFamily {
    Constant {
        value: f64,
    },
    /// `slope·n + intercept`.
    Linear {
        slope: f64,
        intercept: f64,
    },
    /// `values[n - 1]`.
    Table {
        values: Vec<f64>,
    },
}

impl RateFamily {
    pub fn at(&self, n: usize) -> f64 {
        match self {
            RateFamily::Constant { value } => *value,
            RateFamily::Linear { slope, intercept } => slope * n as f64 + intercept,
            RateFamily::Table { values } => values[n - 1],
        }
    }

    fn check(&self, name: &str, n_max: usize) -> Result<()> {
        if let RateFamily::Table { values } = self {
            if values.len() < n_max {
                return Err(QsdError::config(
                    name,
                    format!("table has {} entries, need {n_max}", values.len()),
                ));
            }
        }
        for n in 1..=n_max {
            let v = self.at(n);
            if !(v.is_finite() && v >= 0.0) {
                return Err(QsdError::config(
                    name,
                    format!("rate {v} at n = {n} is not finite and >= 0"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPolicy {
    /// Births from `N` leave the state set (sub-Markov).
    #[default]
    KillAbove,
    /// Births from `N` are suppressed.
    ReflectAbove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BdcParams {
    pub b: RateFamily,
    pub d: RateFamily,
    pub c: RateFamily,
    pub n_max: usize,
    #[serde(default)]
    pub boundary: BoundaryPolicy,
}

impl BdcParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 || self.n_max > MAX_STATES {
            return Err(QsdError::config(
                "n_max",
                format!("must lie in 1..={MAX_STATES}"),
            ));
        }
        self.b.check("b", self.n_max)?;
        self.d.check("d", self.n_max)?;
        self.c.check("c", self.n_max)
    }

    /// `inf_n (b_n + d_n + c_n)` over the truncation.
    pub fn min_total_rate(&self) -> f64 {
        (1..=self.n_max)
            .map(|n| self.b.at(n) + self.d.at(n) + self.c.at(n))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn build_bdc(params: &BdcParams) -> Result<SubMarkovGenerator> {
    params.validate()?;
    let n_max = params.n_max;
    let mut rates = Vec::with_capacity(2 * n_max);
    let mut kill = vec![0.0; n_max];
    for n in 1..=n_max {
        let i = n - 1;
        let (b, d, c) = (params.b.at(n), params.d.at(n), params.c.at(n));
        kill[i] += c;
        if n == 1 {
            kill[i] += d;
        } else {
            rates.push((i, i - 1, d));
        }
        if n < n_max {
            rates.push((i, i + 1, b));
        } else if params.boundary == BoundaryPolicy::KillAbove {
            kill[i] += b;
        }
    }
    SubMarkovGenerator::from_triplets(n_max, &rates, kill)
}

/// Malthusian birth–death family with constant catastrophes above 1:
/// `b_1, c_1` at `n = 1` (no death there), `b_n = b̄n`, `d_n = d̄n`, `c_n = c_2`
/// for `n >= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BdnuParams {
    pub b1: f64,
    pub c1: f64,
    pub b_bar: f64,
    pub d_bar: f64,
    pub c2: f64,
    #[serde(default = "default_bdnu_n_max")]
    pub n_max: usize,
}

fn default_bdnu_n_max() -> usize {
    1 << 14
}

impl BdnuParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("b1", self.b1),
            ("c1", self.c1),
            ("b_bar", self.b_bar),
            ("d_bar", self.d_bar),
            ("c2", self.c2),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(QsdError::config(
                    name,
                    format!("{v} is not finite and >= 0"),
                ));
            }
        }
        if !(self.c2 > self.b1 + self.c1) {
            return Err(QsdError::config(
                "c2",
                format!(
                    "need c2 > b1 + c1, got {} <= {}",
                    self.c2,
                    self.b1 + self.c1
                ),
            ));
        }
        if self.n_max < 2 || self.n_max > MAX_STATES {
            return Err(QsdError::config(
                "n_max",
                format!("must lie in 2..={MAX_STATES}"),
            ));
        }
        Ok(())
    }

    pub fn to_bdc(&self) -> Result<BdcParams> {
        self.validate()?;
        let table = |first: f64, rest: &dyn Fn(usize) -> f64| RateFamily::Table {
            values: (1..=self.n_max)
                .map(|n| if n == 1 { first } else { rest(n) })
                .collect(),
        };
        Ok(BdcParams {
            b: table(self.b1, &|n| self.b_bar * n as f64),
            d: table(0.0, &|n| self.d_bar * n as f64),
            c: table(self.c1, &|_| self.c2),
            n_max: self.n_max,
            boundary: BoundaryPolicy::KillAbove,
        })
    }

    /// `(8|b̄ - d̄| ∨ 1)^{-1}`.
    pub fn escape_time_scale(&self) -> f64 {
        1.0 / (8.0 * (self.b_bar - self.d_bar).abs()).max(1.0)
    }

    /// `4(b̄ + d̄)/(|b̄ - d̄| ∨ 1)`: prefactor of the `2^{-n}` escape bound.
    pub fn escape_bound_constant(&self) -> f64 {
        4.0 * (self.b_bar + self.d_bar) / (self.b_bar - self.d_bar).abs().max(1.0)
    }
}

pub fn build_bdnu(params: &BdnuParams) -> Result<SubMarkovGenerator> {
    build_bdc(&params.to_bdc()?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeightRow {
    pub height: usize,
    /// `‖δ_x A_t − δ_1 A_t‖_TV`.
    pub tv: f64,
    /// Number of low states the law was computed on.
    pub window: usize,
    /// Upper bound on the TV error of the windowed law: mass that left the
    /// window over mass that survived inside it.
    pub window_error: f64,
    /// Conditioned mass on the top state of the truncation.
    pub top_mass: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EscapeRow {
    pub n: u32,
    /// `P_{2^n}(T_n ≤ t_v)`, `T_n` the exit time from `(2^{n-1}, 2^{n+1})`.
    pub prob: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NonuniformityReport {
    pub t: f64,
    pub eps: f64,
    /// Heights examined, ascending, up to and including the witness.
    pub heights: Vec<HeightRow>,
    /// Smallest height whose conditioned law is `1 - ε` away from that of `1`.
    pub witness: Option<usize>,
    pub t_v: f64,
    pub escape: Vec<EscapeRow>,
    pub escape_decreasing: bool,
    pub escape_within_bound: bool,
    pub warnings: Vec<String>,
}

/// Mass above which the top state is flagged as distorting the result.
const TOP_MASS_WARNING: f64 = 1e-6;
/// Accepted ratio of window overflow to surviving mass.
const WINDOW_TOL: f64 = 1e-9;

struct WindowedLaw {
    law: Vec<f64>,
    window: usize,
    error: f64,
}

/// `δ_start A_t` computed on the lowest `window` states, with leaving the
/// window routed to a separate absorbing state. The windowed law is an
/// entrywise lower bound of the true one, so the overflow ratio bounds the
/// error; the window grows until that ratio is below `WINDOW_TOL`.
fn windowed_conditioned(gen: &SubMarkovGenerator, start: usize, t: f64) -> Result<WindowedLaw> {
    let n = gen.len();
    let mut window = (64 * (start + 1)).min(n);
    loop {
        if window == n {
            let mu = ProbabilityVector::dirac(n, start)?;
            let (law, _) = Uniformizer::new(gen).conditioned(&mu, t, DEFAULT_TOL)?;
            return Ok(WindowedLaw {
                law: law.into_weights(),
                window,
                error: 0.0,
            });
        }
        let mut rates = Vec::new();
        for i in 0..window {
            for (j, q) in gen.row(i) {
                rates.push((i, j.min(window), q));
            }
        }
        let mut kill = gen.kill_rates()[..window].to_vec();
        kill.push(0.0);
        let sub = SubMarkovGenerator::from_triplets(window + 1, &rates, kill)?;
        let mu = ProbabilityVector::dirac(window + 1, start)?;
        let out = Uniformizer::new(&sub).evolve_left(mu.weights(), t, DEFAULT_TOL)?;
        let w = &out.vector;
        let inside: f64 = w[..window].iter().sum();
        if inside <= 0.0 {
            return Err(QsdError::ExtinctMass { mass: 0.0 });
        }
        let error = w[window] / inside;
        if error <= WINDOW_TOL {
            let mut law = vec![0.0; n];
            law[..window]
                .iter_mut()
                .zip(w)
                .for_each(|(l, x)| *l = x / inside);
            return Ok(WindowedLaw { law, window, error });
        }
        window = (window * 2).min(n);
    }
}

/// Searches `heights` in ascending order for the first starting size whose
/// conditioned law at `t` is `1 - ε` away from the one started at `1`, and
/// measures the escape probabilities `P_{2^n}(T_n ≤ t_v)` for `n` in `levels`.
pub fn nonuniformity_experiment(
    params: &BdnuParams,
    t: f64,
    eps: f64,
    heights: &[usize],
    levels: &[u32],
) -> Result<NonuniformityReport> {
    let gen = build_bdnu(params)?;
    let n_max = params.n_max;
    if let Some(&h) = heights.iter().find(|&&h| h == 0 || h > n_max) {
        return Err(QsdError::invalid(format!("height {h} outside 1..={n_max}")));
    }
    if let Some(&n) = levels
        .iter()
        .find(|&&n| n == 0 || (1usize << (n + 1)) > n_max + 1)
    {
        return Err(QsdError::invalid(format!(
            "level {n} leaves the truncation"
        )));
    }
    let mut sorted = heights.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut warnings = Vec::new();
    let mut check_top = |h: usize, law: &[f64]| {
        if law[n_max - 1] > TOP_MASS_WARNING {
            warnings.push(format!(
                "truncation: start {h} puts {:e} on the top state",
                law[n_max - 1]
            ));
        }
    };
    let base = windowed_conditioned(&gen, 0, t)?;
    check_top(1, &base.law);
    let mut rows = Vec::new();
    let mut witness = None;
    for h in sorted {
        let w = windowed_conditioned(&gen, h - 1, t)?;
        check_top(h, &w.law);
        let tv = tv_slices(&w.law, &base.law);
        rows.push(HeightRow {
            height: h,
            tv,
            window: w.window,
            window_error: w.error + base.error,
            top_mass: w.law[n_max - 1],
        });
        if tv >= 1.0 - eps {
            witness = Some(h);
            break;
        }
    }

    let t_v = params.escape_time_scale();
    let k = params.escape_bound_constant();
    let escape = levels
        .par_iter()
        .map(|&n| {
            let lo = 1usize << (n - 1);
            let hi = 1usize << (n + 1);
            // Window states lo+1 ..= hi-1; catastrophes play no part.
            let window: Vec<usize> = (lo + 1..hi).map(|s| s - 1).collect();
            let mut local = Vec::new();
            let mut kill = vec![0.0; window.len()];
            for (p, &i) in window.iter().enumerate() {
                for (j, q) in gen.row(i) {
                    match window.binary_search(&j) {
                        Ok(pj) => local.push((p, pj, q)),
                        Err(_) => kill[p] += q,
                    }
                }
                if i + 1 == n_max && params.b_bar > 0.0 {
                    kill[p] += params.b_bar * n_max as f64;
                }
            }
            let sub = SubMarkovGenerator::from_triplets(window.len(), &local, kill)?
                .with_cemetery_state();
            let start = ProbabilityVector::dirac(sub.len(), (1usize << n) - 1 - lo)?;
            let law = Uniformizer::new(&sub).apply(&start, t_v, DEFAULT_TOL)?;
            Ok(EscapeRow {
                n,
                prob: law.weights()[sub.len() - 1],
                bound: k * 0.5f64.powi(n as i32),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let escape_decreasing = escape.windows(2).all(|w| w[1].prob <= w[0].prob + 1e-12);
    let escape_within_bound = escape.iter().all(|r| r.prob <= r.bound);
    Ok(NonuniformityReport {
        t,
        eps,
        heights: rows,
        witness,
        t_v,
        escape,
        escape_decreasing,
        escape_within_bound,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve_eigentriple;

    fn constant(v: f64) -> RateFamily {
        RateFamily::Constant { value: v }
    }

    #[test]
    fn pure_death_single_state() {
        let p = BdcParams {
            b: constant(0.0),
            d: constant(0.8),
            c: constant(0.0),
            n_max: 1,
            boundary: BoundaryPolicy::KillAbove,
        };
        let g = build_bdc(&p).unwrap();
        assert_eq!(g.len(), 1);
        assert!((solve_eigentriple(&g, 1e-12, 10).unwrap().lambda0 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn golden_chain_by_construction() {
        let p = BdcParams {
            b: RateFamily::Table {
                values: vec![1.0, 0.0],
            },
            d: constant(1.0),
            c: constant(0.0),
            n_max: 2,
            boundary: BoundaryPolicy::KillAbove,
        };
        let g = build_bdc(&p).unwrap();
        let golden =
            SubMarkovGenerator::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)], vec![1.0, 0.0])
                .unwrap();
        assert_eq!(g.to_doc(), golden.to_doc());
    }

    #[test]
    fn boundary_policies() {
        let mut p = BdcParams {
            b: RateFamily::Linear {
                slope: 1.0,
                intercept: 0.5,
            },
            d: constant(1.0),
            c: constant(0.1),
            n_max: 5,
            boundary: BoundaryPolicy::KillAbove,
        };
        let g = build_bdc(&p).unwrap();
        assert!((g.kill(4) - (0.1 + 5.5)).abs() < 1e-15);
        assert!((g.kill(0) - 1.1).abs() < 1e-15);
        p.boundary = BoundaryPolicy::ReflectAbove;
        let g = build_bdc(&p).unwrap();
        assert!((g.kill(4) - 0.1).abs() < 1e-15);
        assert!(g.row(1).count() == 2);
    }

    #[test]
    fn rejects_bad_rates() {
        let p = BdcParams {
            b: RateFamily::Table { values: vec![1.0] },
            d: constant(1.0),
            c: constant(-1.0),
            n_max: 2,
            boundary: BoundaryPolicy::KillAbove,
        };
        assert!(matches!(build_bdc(&p), Err(QsdError::Config { path, .. }) if path == "b"));
        let json = r#"{"b": {"family": "constant", "value": 1}, "d": {"family": "linear", "slope": 1, "intercept": 0},
                       "c": {"family": "constant", "value": 0}, "n_max": 3, "boundary": "reflect-above"}"#;
        let p: BdcParams = serde_json::from_str(json).unwrap();
        assert_eq!(p.boundary, BoundaryPolicy::ReflectAbove);
    }

    #[test]
    fn bdnu_constraint_and_shape() {
        let mut p = BdnuParams {
            b1: 1.0,
            c1: 0.5,
            b_bar: 2.0,
            d_bar: 1.0,
            c2: 2.0,
            n_max: 64,
        };
        let g = build_bdnu(&p).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.rate(0, 1), 1.0);
        assert_eq!(g.kill(0), 0.5);
        assert_eq!(g.rate(9, 8), 10.0);
        assert_eq!(g.rate(9, 10), 20.0);
        assert_eq!(g.kill(9), 2.0);
        assert!((p.escape_time_scale() - 0.125).abs() < 1e-15);
        p.c2 = 1.5;
        assert!(build_bdnu(&p).is_err());
    }

    #[test]
    fn small_nonuniformity_run() {
        let p = BdnuParams {
            b1: 1.0,
            c1: 0.5,
            b_bar: 2.0,
            d_bar: 1.0,
            c2: 2.0,
            n_max: 256,
        };
        let r = nonuniformity_experiment(&p, 0.5, 0.1, &[2, 64], &[1, 2, 3, 4]).unwrap();
        assert!(r.heights[1].tv > r.heights[0].tv);
        assert!(r.heights.iter().all(|h| h.window_error <= 2e-9));
        assert!(
            r.escape_decreasing && r.escape_within_bound,
            "{:?}",
            r.escape
        );
    }

    #[test]
    fn window_matches_full_truncation() {
        let p = BdnuParams {
            b1: 1.0,
            c1: 0.5,
            b_bar: 2.0,
            d_bar: 1.0,
            c2: 2.0,
            n_max: 2048,
        };
        let g = build_bdnu(&p).unwrap();
        let w = windowed_conditioned(&g, 3, 1.0).unwrap();
        assert!(w.window < 2048);
        let mu = ProbabilityVector::dirac(2048, 3).unwrap();
        let (full, _) = Uniformizer::new(&g).conditioned(&mu, 1.0, 1e-13).unwrap();
        assert!(tv_slices(&w.law, full.weights()) < 2e-9);
    }
}
