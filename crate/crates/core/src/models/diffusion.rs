//! The adaptation diffusion: a population size `N` with logistic growth and
//! Feller noise, a trait `X ∈ ℝ^d` whose value sets the growth rate, and
//! catastrophes killing the whole population.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};
use crate::generator::{SubMarkovGenerator, MAX_STATES};
use crate::mc::rng::PathRng;

/// A scalar function of `(x, n)`, through `‖x‖` and `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Field {
    Constant {
        value: f64,
    },
    /// `peak − curvature·‖x‖²`.
    QuadraticWell {
        peak: f64,
        curvature: f64,
    },
    /// `intercept + slope_x·‖x‖ + slope_n·n`.
    Linear {
        intercept: f64,
        #[serde(default)]
        slope_x: f64,
        #[serde(default)]
        slope_n: f64,
    },
    /// Piecewise-linear in `‖x‖` through `(radius[i], values[i])`, constant
    /// beyond the ends.
    Table {
        radius: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Field {
    pub fn eval(&self, norm_x: f64, n: f64) -> f64 {
        match self {
            Field::Constant { value } => *value,
            Field::QuadraticWell { peak, curvature } => peak - curvature * norm_x * norm_x,
            Field::Linear {
                intercept,
                slope_x,
                slope_n,
            } => intercept + slope_x * norm_x + slope_n * n,
            Field::Table { radius, values } => interpolate(radius, values, norm_x),
        }
    }

    /// Whether the field tends to `−∞` as `‖x‖ → ∞`.
    pub fn decays(&self) -> bool {
        match self {
            Field::QuadraticWell { curvature, .. } => *curvature > 0.0,
            Field::Linear {
                slope_x, slope_n, ..
            } => *slope_x < 0.0 && *slope_n == 0.0,
            _ => false,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Field::Constant { value } => value.is_finite(),
            Field::QuadraticWell { peak, curvature } => finite(&[*peak, *curvature]),
            Field::Linear {
                intercept,
                slope_x,
                slope_n,
            } => finite(&[*intercept, *slope_x, *slope_n]),
            Field::Table { radius, values } => {
                if radius.is_empty() || radius.len() != values.len() {
                    return Err(QsdError::config(
                        name,
                        "table needs matching, non-empty radius and values",
                    ));
                }
                if radius.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(QsdError::config(
                        format!("{name}.radius"),
                        "must be strictly increasing",
                    ));
                }
                finite(radius) && finite(values)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(QsdError::config(name, "non-finite coefficient"))
        }
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    match xs.iter().position(|&p| p > x) {
        Some(0) => ys[0],
        None => ys[ys.len() - 1],
        Some(i) => {
            let w = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
            ys[i - 1] + w * (ys[i] - ys[i - 1])
        }
    }
}

/// Drift of the trait.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift {
    #[default]
    Zero,
    /// `−rate·x`: selection pulling the trait back to the optimum.
    Linear { rate: f64 },
}

impl Drift {
    fn validate(&self) -> Result<()> {
        match self {
            Drift::Linear { rate } if !rate.is_finite() => {
                Err(QsdError::config("b.rate", "non-finite"))
            }
            _ => Ok(()),
        }
    }
}

fn zero_field() -> Field {
    Field::Constant { value: 0.0 }
}

fn default_dim() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Growth rate `r(x)`.
    pub r: Field,
    /// Competition coefficient.
    pub c: f64,
    /// Demographic noise.
    pub sigma_n: f64,
    #[serde(default)]
    pub b: Drift,
    #[serde(default = "zero_field")]
    pub sigma_x: Field,
    #[serde(default = "zero_field")]
    pub rho_c: Field,
    /// Absorption threshold for `N`; defaults to `10⁻⁶` carrying capacities.
    #[serde(default)]
    pub eps_abs: Option<f64>,
}

impl DiffusionSpec {
    /// The built-in model: quadratic fitness well, linear selection toward
    /// the optimum, constant trait noise, no catastrophes.
    pub fn quadratic_well() -> Self {
        Self {
            dim: 1,
            r: Field::QuadraticWell {
                peak: 1.0,
                curvature: 1.0,
            },
            c: 1.0,
            sigma_n: 1.0,
            b: Drift::Linear { rate: 1.0 },
            sigma_x: Field::Constant { value: 0.5 },
            rho_c: zero_field(),
            eps_abs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(QsdError::config("dim", "must be >= 1"));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(QsdError::config("c", "must be finite and >= 0"));
        }
        if !(self.sigma_n > 0.0 && self.sigma_n.is_finite()) {
            return Err(QsdError::config("sigma_n", "must be finite and > 0"));
        }
        self.r.validate("r")?;
        self.b.validate()?;
        self.sigma_x.validate("sigma_x")?;
        self.rho_c.validate("rho_c")?;
        if let Some(e) = self.eps_abs {
            if !(e > 0.0 && e.is_finite()) {
                return Err(QsdError::config("eps_abs", "must be finite and > 0"));
            }
        }
        Ok(())
    }

    /// Whether `r(x) → −∞` as `‖x‖ → ∞`.
    pub fn r_decays(&self) -> bool {
        self.r.decays()
    }

    /// Carrying capacity `r(x)/c` at the optimum `x = 0`.
    pub fn typical_capacity(&self) -> f64 {
        if self.c > 0.0 {
            (self.r.eval(0.0, 0.0) / self.c).max(1.0)
        } else {
            1.0
        }
    }

    pub fn eps_abs(&self) -> f64 {
        self.eps_abs.unwrap_or(1e-6 * self.typical_capacity())
    }

    /// `y = 2√n/σ_N`: the coordinate in which the population noise is a
    /// standard Brownian motion.
    pub fn to_y(&self, n: f64) -> f64 {
        2.0 * n.max(0.0).sqrt() / self.sigma_n
    }

    pub fn to_n(&self, y: f64) -> f64 {
        (0.5 * self.sigma_n * y).powi(2)
    }

    fn drift_x(&self, x: &[f64], out: &mut [f64]) {
        match self.b {
            Drift::Zero => out.iter_mut().for_each(|o| *o = 0.0),
            Drift::Linear { rate } => out.iter_mut().zip(x).for_each(|(o, xi)| *o = -rate * xi),
        }
    }
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathEnd {
    /// `N` reached the absorption threshold.
    Extinct,
    Catastrophe,
    /// The caller's stopping rule fired.
    Stopped,
    Horizon,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(QsdError::invalid(
                "dt must be > 0 and t_max finite and >= 0",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunEnd {
    pub t: f64,
    pub x: Vec<f64>,
    pub n: f64,
    pub end: PathEnd,
    /// Times the catastrophe rate exceeded its local bound.
    pub bound_violations: u32,
}

/// Steps between refreshes of the catastrophe bound.
const BOUND_REFRESH: u32 = 100;
/// Largest `(|r| + c·n)·h` allowed in one step.
const STIFF_STEP: f64 = 0.1;
/// Largest `σ_N²·h/n` allowed in one step.
const BOUNDARY_STEP: f64 = 0.05;

/// Full-truncation Euler–Maruyama from `(x0, n0)` until absorption,
/// `stop(x, n, t)` returns true, or `t_max`. `dt` is the nominal step; it
/// is shortened where the logistic drift is stiff.
pub fn run_diffusion(
    spec: &DiffusionSpec,
    x0: &[f64],
    n0: f64,
    cfg: &SimConfig,
    rng: &mut PathRng,
    mut stop: impl FnMut(&[f64], f64, f64) -> bool,
) -> Result<RunEnd> {
    cfg.validate()?;
    if x0.len() != spec.dim {
        return Err(QsdError::DimensionMismatch {
            expected: spec.dim,
            got: x0.len(),
        });
    }
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(QsdError::invalid(format!(
            "initial population {n0} must be positive"
        )));
    }
    let eps = spec.eps_abs();
    let mut x = x0.to_vec();
    let mut bx = vec![0.0; spec.dim];
    let mut n = n0;
    let mut t = 0.0;
    let mut violations = 0;
    let mut since_refresh = BOUND_REFRESH;
    let mut bound = 0.0;
    // Remaining unit-rate exponential clock for the thinned catastrophes.
    let mut clock: f64 = rng.sample(Exp1);
    let end = |t: f64, x: Vec<f64>, n: f64, end: PathEnd, v: u32| RunEnd {
        t,
        x,
        n,
        end,
        bound_violations: v,
    };
    if stop(&x, n, t) {
        return Ok(end(t, x, n, PathEnd::Stopped, violations));
    }
    if n <= eps {
        return Ok(end(t, x, n, PathEnd::Extinct, violations));
    }
    while t < cfg.t_max {
        let nx = norm(&x);
        let r = spec.r.eval(nx, n);
        let sx = spec.sigma_x.eval(nx, n);
        spec.drift_x(&x, &mut bx);
        if !(r.is_finite() && sx.is_finite() && bx.iter().all(|v| v.is_finite())) {
            return Err(QsdError::NonFinite(format!("coefficients at t = {t}")));
        }
        let stiff = r.abs() + spec.c * n + 1.0;
        // Near the boundary the Feller noise dominates: keep the relative
        // noise of one step bounded so absorption is resolved in time.
        let boundary = BOUNDARY_STEP * n / (spec.sigma_n * spec.sigma_n);
        let h = cfg
            .dt
            .min(STIFF_STEP / stiff)
            .min(boundary)
            .min(cfg.t_max - t);

        let rho = spec.rho_c.eval(nx, n);
        if since_refresh >= BOUND_REFRESH {
            bound = 2.0 * rho.max(0.0);
            since_refresh = 0;
        }
        since_refresh += 1;
        if bound > 0.0 || rho > 0.0 {
            if rho > bound {
                violations += 1;
                bound = 2.0 * rho;
            }
            clock -= bound * h;
            if clock <= 0.0 {
                clock = rng.sample(Exp1);
                if rng.random::<f64>() * bound < rho.max(0.0) {
                    return Ok(end(t + h, x, n, PathEnd::Catastrophe, violations));
                }
            }
        }

        let sq = h.sqrt();
        let dn: f64 = rng.sample(StandardNormal);
        for (xi, b) in x.iter_mut().zip(&bx) {
            let dw: f64 = rng.sample(StandardNormal);
            *xi += b * h + sx * sq * dw;
        }
        let np = n.max(0.0);
        n = np + (r - spec.c * np) * np * h + spec.sigma_n * np.sqrt() * sq * dn;
        t = if h == cfg.t_max - t { cfg.t_max } else { t + h };
        if !n.is_finite() {
            return Err(QsdError::NonFinite(format!("population at t = {t}")));
        }
        if n <= eps {
            return Ok(end(t, x, n.max(0.0), PathEnd::Extinct, violations));
        }
        if stop(&x, n, t) {
            return Ok(end(t, x, n, PathEnd::Stopped, violations));
        }
    }
    Ok(end(t, x, n, PathEnd::Horizon, violations))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    /// Samples at multiples of `dt` (and the final time).
    pub times: Vec<f64>,
    pub xs: Vec<Vec<f64>>,
    pub ns: Vec<f64>,
    /// Absorption time, by either extinction or catastrophe.
    pub absorbed_at: Option<f64>,
    pub end: PathEnd,
}

/// One path of the diffusion, sampled every `dt`.
pub fn simulate_diffusion(
    spec: &DiffusionSpec,
    x0: &[f64],
    n0: f64,
    cfg: &SimConfig,
    rng: &mut PathRng,
) -> Result<Trajectory> {
    spec.validate()?;
    let mut traj = Trajectory {
        times: vec![0.0],
        xs: vec![x0.to_vec()],
        ns: vec![n0],
        absorbed_at: None,
        end: PathEnd::Horizon,
    };
    let mut next = cfg.dt;
    let res = run_diffusion(spec, x0, n0, cfg, rng, |x, n, t| {
        if t >= next * (1.0 - 1e-12) {
            traj.times.push(t);
            traj.xs.push(x.to_vec());
            traj.ns.push(n);
            next += cfg.dt;
        }
        false
    })?;
    if traj.times.last() != Some(&res.t) {
        traj.times.push(res.t);
        traj.xs.push(res.x.clone());
        traj.ns.push(res.n);
    }
    traj.end = res.end;
    if matches!(res.end, PathEnd::Extinct | PathEnd::Catastrophe) {
        traj.absorbed_at = Some(res.t);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizeOptions {
    /// Trait window `[−x_max, x_max]` split into `nx` cells.
    pub x_max: f64,
    pub nx: usize,
    /// Population levels `n_max·k/nn`, `k = 1..=nn`.
    pub n_max: f64,
    pub nn: usize,
}

/// Grid chain on a compact window of the one-dimensional model.
#[derive(Debug, Clone)]
pub struct DiscreteDiffusion {
    pub generator: SubMarkovGenerator,
    pub xs: Vec<f64>,
    pub ns: Vec<f64>,
}

impl DiscreteDiffusion {
    /// Index of grid point `(i, k)`.
    pub fn index(&self, i: usize, k: usize) -> usize {
        i * self.ns.len() + k
    }
}

/// Upwind finite-difference chain (locally consistent with the generator)
/// on the window. Leaving through the bottom population level is
/// extinction; catastrophes are killing; the other edges reflect.
pub fn discretize(spec: &DiffusionSpec, opts: &DiscretizeOptions) -> Result<DiscreteDiffusion> {
    spec.validate()?;
    if spec.dim != 1 {
        return Err(QsdError::invalid(
            "discretization is implemented for one trait dimension",
        ));
    }
    if opts.nx < 2
        || opts.nn < 2
        || !(opts.x_max > 0.0 && opts.x_max.is_finite())
        || !(opts.n_max > 0.0 && opts.n_max.is_finite())
    {
        return Err(QsdError::invalid(
            "window needs nx, nn >= 2 and positive finite extents",
        ));
    }
    if opts.nx.checked_mul(opts.nn).is_none_or(|s| s > MAX_STATES) {
        return Err(QsdError::invalid(format!(
            "window has more than {MAX_STATES} states"
        )));
    }
    let hx = 2.0 * opts.x_max / (opts.nx - 1) as f64;
    let hn = opts.n_max / opts.nn as f64;
    let xs: Vec<f64> = (0..opts.nx).map(|i| -opts.x_max + i as f64 * hx).collect();
    let ns: Vec<f64> = (1..=opts.nn).map(|k| k as f64 * hn).collect();
    let m = opts.nn;
    let mut rates = Vec::new();
    let mut kill = vec![0.0; opts.nx * m];
    let mut bx = [0.0];
    for (i, &x) in xs.iter().enumerate() {
        spec.drift_x(&[x], &mut bx);
        for (k, &n) in ns.iter().enumerate() {
            let s = i * m + k;
            let r = spec.r.eval(x.abs(), n);
            let mu = (r - spec.c * n) * n;
            let a = spec.sigma_n * spec.sigma_n * n;
            let up = 0.5 * a / (hn * hn) + mu.max(0.0) / hn;
            let down = 0.5 * a / (hn * hn) + (-mu).max(0.0) / hn;
            if k + 1 < m {
                rates.push((s, s + 1, up));
            }
            if k > 0 {
                rates.push((s, s - 1, down));
            } else {
                kill[s] += down;
            }
            let sx = spec.sigma_x.eval(x.abs(), n);
            let ax = sx * sx;
            let right = 0.5 * ax / (hx * hx) + bx[0].max(0.0) / hx;
            let left = 0.5 * ax / (hx * hx) + (-bx[0]).max(0.0) / hx;
            if i + 1 < opts.nx {
                rates.push((s, s + m, right));
            }
            if i > 0 {
                rates.push((s, s - m, left));
            }
            kill[s] += spec.rho_c.eval(x.abs(), n).max(0.0);
        }
    }
    let generator = SubMarkovGenerator::from_triplets(opts.nx * m, &rates, kill)?;
    Ok(DiscreteDiffusion { generator, xs, ns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::rng::stream;

    fn logistic() -> DiffusionSpec {
        DiffusionSpec {
            dim: 1,
            r: Field::QuadraticWell {
                peak: 2.0,
                curvature: 1.0,
            },
            c: 0.5,
            sigma_n: 0.0f64.max(1e-300),
            b: Drift::Zero,
            sigma_x: zero_field(),
            rho_c: zero_field(),
            eps_abs: None,
        }
    }

    #[test]
    fn deterministic_logistic_reaches_capacity() {
        let spec = logistic();
        let cfg = SimConfig {
            dt: 1e-3,
            t_max: 20.0,
        };
        let x = [0.5];
        let traj = simulate_diffusion(&spec, &x, 0.1, &cfg, &mut stream(1, 0)).unwrap();
        let cap = spec.r.eval(0.5, 0.0) / spec.c;
        assert!((traj.ns.last().unwrap() - cap).abs() < 1e-6 * cap);
        // Exact logistic solution at t = 1.
        let r = spec.r.eval(0.5, 0.0);
        let exact = cap / (1.0 + (cap / 0.1 - 1.0) * (-r).exp());
        let i = traj
            .times
            .iter()
            .position(|&t| (t - 1.0).abs() < 1e-9)
            .unwrap();
        assert!((traj.ns[i] - exact).abs() / exact < 5e-3);
        assert_eq!(traj.end, PathEnd::Horizon);
    }

    #[test]
    fn catastrophes_arrive_at_their_rate() {
        let mut spec = logistic();
        spec.rho_c = Field::Constant { value: 2.0 };
        let cfg = SimConfig {
            dt: 1e-2,
            t_max: 100.0,
        };
        let times: Vec<f64> = (0..4000)
            .map(|i| {
                let end =
                    run_diffusion(&spec, &[0.0], 1.0, &cfg, &mut stream(5, i), |_, _, _| false)
                        .unwrap();
                assert_eq!(end.end, PathEnd::Catastrophe);
                end.t
            })
            .collect();
        let (m, se) = crate::mc::rng::mean_stderr(&times);
        assert!((m - 0.5).abs() < 3.0 * se + 0.01, "{m} ± {se}");
    }

    #[test]
    fn y_coordinates_round_trip() {
        let spec = DiffusionSpec::quadratic_well();
        assert!((spec.to_n(spec.to_y(3.7)) - 3.7).abs() < 1e-12);
        assert!(spec.r_decays());
        assert!(!logistic().rho_c.decays());
    }

    #[test]
    fn monotone_in_initial_population() {
        let mut spec = DiffusionSpec::quadratic_well();
        spec.sigma_x = zero_field();
        let cfg = SimConfig {
            dt: 1e-3,
            t_max: 3.0,
        };
        for i in 0..200 {
            let lo = simulate_diffusion(&spec, &[0.3], 0.5, &cfg, &mut stream(11, i)).unwrap();
            let hi = simulate_diffusion(&spec, &[0.3], 0.8, &cfg, &mut stream(11, i)).unwrap();
            // Both paths share every noise increment while they step at `dt`,
            // i.e. until the lower one comes close to the boundary.
            for (a, b) in lo.ns.iter().zip(&hi.ns).take_while(|(a, _)| **a >= 0.05) {
                assert!(b >= a, "path {i}: {b} < {a}");
            }
        }
    }

    #[test]
    fn table_interpolation_and_validation() {
        let f = Field::Table {
            radius: vec![0.0, 1.0, 2.0],
            values: vec![1.0, 0.0, -4.0],
        };
        assert_eq!(f.eval(0.5, 0.0), 0.5);
        assert_eq!(f.eval(5.0, 0.0), -4.0);
        let mut spec = DiffusionSpec::quadratic_well();
        spec.r = Field::Table {
            radius: vec![1.0, 0.0],
            values: vec![0.0, 0.0],
        };
        assert!(
            matches!(spec.validate(), Err(QsdError::Config { path, .. }) if path == "r.radius")
        );
        let json = r#"{"r": {"kind": "quadratic_well", "peak": 1, "curvature": 2}, "c": 1, "sigma_n": 0.5}"#;
        let spec: DiffusionSpec = serde_json::from_str(json).unwrap();
        assert!(spec.validate().is_ok() && spec.dim == 1);
    }

    #[test]
    fn discretized_window_is_a_sub_generator() {
        let spec = DiffusionSpec::quadratic_well();
        let d = discretize(
            &spec,
            &DiscretizeOptions {
                x_max: 1.5,
                nx: 7,
                n_max: 3.0,
                nn: 12,
            },
        )
        .unwrap();
        let g = &d.generator;
        assert_eq!(g.len(), 84);
        assert!(g.is_irreducible());
        assert!(g.kill(d.index(3, 0)) > 0.0 && g.kill(d.index(3, 5)) == 0.0);
    }
}
