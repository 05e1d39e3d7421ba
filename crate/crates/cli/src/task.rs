//! Task definitions and their execution into in-memory output files.

use std::fmt::Write as _;

use qsd_core::assumptions::{verify, Exhaustion, VerifyOptions, VerifyReport};
use qsd_core::convergence::profile_with;
use qsd_core::coupling::{run_coupling, verify_lower_bound};
use qsd_core::eigen::{solve_eigentriple, spectral_gap, DEFAULT_MAX_ITER};
use qsd_core::grid::log_grid;
use qsd_core::mc::fleming_viot::{fleming_viot, FvOptions};
use qsd_core::mc::gillespie::estimate_dcne_naive;
use qsd_core::mc::qprocess::QProcess;
use qsd_core::mc::rng::stream;
use qsd_core::models::diffusion::SimConfig;
use qsd_core::models::transitory::MomentConfig;
use qsd_core::models::{
    escape_study, nonuniformity_experiment, simulate_diffusion, ModelConfig, MuSpec,
};
use qsd_core::{dcne, tv_distance, QsdError, SubMarkovGenerator};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Independent paths conditioned on survival.
    Naive,
    /// Particle system with resampling at absorption.
    FlemingViot,
    /// Paths of the process conditioned never to be absorbed.
    Qprocess,
    /// One path of a diffusion model.
    Path,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Solve {
        mu: MuSpec,
        t_max: f64,
    },
    Verify {
        options: VerifyOptions,
    },
    Couple {
        options: VerifyOptions,
        mu: MuSpec,
        t_h: f64,
    },
    Simulate {
        method: Method,
        mu: MuSpec,
        t: f64,
        paths: usize,
        dt: f64,
    },
    Nonuniformity {
        t: f64,
        eps: f64,
        heights: Vec<usize>,
        levels: Vec<u32>,
    },
    EscapeMoments {
        y_inf: f64,
        n_c: Vec<f64>,
        rho: f64,
        paths: usize,
        dt: f64,
        t_cap: f64,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Solve { .. } => "solve",
            Task::Verify { .. } => "verify",
            Task::Couple { .. } => "couple",
            Task::Simulate { .. } => "simulate",
            Task::Nonuniformity { .. } => "nonuniformity",
            Task::EscapeMoments { .. } => "escape-moments",
        }
    }

    pub fn needs_exhaustion(&self) -> bool {
        matches!(self, Task::Verify { .. } | Task::Couple { .. })
    }

    /// Rejects model/task combinations before any work starts.
    pub fn check_model(&self, model: &ModelConfig) -> Result<(), CliError> {
        let ok = match self {
            Task::Nonuniformity { .. } => matches!(model, ModelConfig::Bdnu(_)),
            Task::EscapeMoments { .. } => matches!(model, ModelConfig::Diffusion(_)),
            Task::Simulate {
                method: Method::Path,
                ..
            } => matches!(model, ModelConfig::Diffusion(_)),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "task {} does not apply to a {} model",
                self.name(),
                model.kind()
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Refuted,
}

pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub status: Status,
}

impl Outputs {
    fn new() -> Self {
        Self {
            files: Vec::new(),
            status: Status::Ok,
        }
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(QsdError::from)?;
        bytes.push(b'\n');
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    fn text(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }
}

pub struct Inputs<'a> {
    pub model: &'a ModelConfig,
    pub exhaustion: Option<&'a Exhaustion>,
    pub seed: u64,
    pub tol: f64,
}

fn exhaustion<'a>(inputs: &Inputs<'a>) -> Result<&'a Exhaustion, CliError> {
    inputs
        .exhaustion
        .ok_or_else(|| CliError::Usage("this task needs --exhaustion".into()))
}

fn verify_outputs(report: &VerifyReport, out: &mut Outputs) -> Result<(), CliError> {
    out.json("certificates.json", &report.certificates)?;
    if let Some(c) = &report.constants {
        out.json("constants.json", c)?;
    }
    if report.refuted() {
        out.status = Status::Refuted;
    }
    Ok(())
}

pub fn execute(task: &Task, inputs: &Inputs) -> Result<Outputs, CliError> {
    task.check_model(inputs.model)?;
    let mut out = Outputs::new();
    match task {
        Task::Solve { mu, t_max } => {
            let gen = inputs.model.generator()?;
            let eigen = solve_eigentriple(&gen, inputs.tol, DEFAULT_MAX_ITER)?;
            let gap = spectral_gap(&gen, &eigen, inputs.tol, DEFAULT_MAX_ITER).ok();
            let mu = mu.resolve(gen.len(), Some(&eigen))?;
            let grid = log_grid(0.01, *t_max, 16)?;
            let profile = profile_with(&gen, &eigen, &[mu], &grid)?;
            out.json(
                "eigen.json",
                &json!({
                    "lambda0": eigen.lambda0,
                    "alpha": eigen.alpha,
                    "eta": eigen.eta,
                    "beta": eigen.beta(),
                    "residual_left": eigen.residual_left,
                    "residual_right": eigen.residual_right,
                    "spectral_gap": gap,
                    "tv_decay_rate": profile.tv_rates[0],
                    "eta_decay_rate": profile.eta_rates[0],
                    "iterations": eigen.iterations,
                    "degenerate": eigen.degenerate,
                }),
            )?;
            out.text("convergence.csv", profile.to_csv());
        }
        Task::Verify { options } => {
            let gen = inputs.model.generator()?;
            let report = verify(&gen, exhaustion(inputs)?, options)?;
            verify_outputs(&report, &mut out)?;
            out.json("summary.json", &json!({ "refutation": report.refutation }))?;
        }
        Task::Couple { options, mu, t_h } => {
            let gen = inputs.model.generator()?;
            let report = verify(&gen, exhaustion(inputs)?, options)?;
            verify_outputs(&report, &mut out)?;
            let Some(constants) = &report.constants else {
                out.json("summary.json", &json!({ "refutation": report.refutation }))?;
                return Ok(out);
            };
            let eigen = solve_eigentriple(&gen, inputs.tol, DEFAULT_MAX_ITER)?;
            let mu = mu.resolve(gen.len(), Some(&eigen))?;
            let run = run_coupling(&gen, &constants.coupling, &mu, *t_h)?;
            out.text("trace.csv", run.trace_csv());
            let bound = verify_lower_bound(&gen, &constants.coupling, &[mu], &[(*t_h, *t_h)])?;
            let row = &bound.rows[0];
            let dominated = bound.check().is_ok();
            if !dominated {
                out.status = Status::Refuted;
            }
            out.json(
                "coupling.json",
                &json!({
                    "steps": run.last.big_j,
                    "final_residual": run.last.r,
                    "zeta": constants.zeta,
                    "prefactor": constants.prefactor,
                    "max_identity_deviation": run.max_identity_deviation(),
                    "min_domination_slack": row.min_slack,
                    "worst_state": row.worst_state,
                    "tv_bound": row.tv_bound,
                    "dominated": dominated,
                }),
            )?;
        }
        Task::Simulate {
            method,
            mu,
            t,
            paths,
            dt,
        } => simulate(*method, mu, *t, *paths, *dt, inputs, &mut out)?,
        Task::Nonuniformity {
            t,
            eps,
            heights,
            levels,
        } => {
            let ModelConfig::Bdnu(params) = inputs.model else {
                unreachable!("checked above")
            };
            let rep = nonuniformity_experiment(params, *t, *eps, heights, levels)?;
            let mut h = String::from("height,tv,window,window_error,top_mass\n");
            for r in &rep.heights {
                writeln!(
                    h,
                    "{},{:e},{},{:e},{:e}",
                    r.height, r.tv, r.window, r.window_error, r.top_mass
                )
                .unwrap();
            }
            let mut e = String::from("n,prob,bound\n");
            for r in &rep.escape {
                writeln!(e, "{},{:e},{:e}", r.n, r.prob, r.bound).unwrap();
            }
            out.json("nonuniformity.json", &rep)?;
            out.text("heights.csv", h);
            out.text("escape.csv", e);
        }
        Task::EscapeMoments {
            y_inf,
            n_c,
            rho,
            paths,
            dt,
            t_cap,
        } => {
            let ModelConfig::Diffusion(m) = inputs.model else {
                unreachable!("checked above")
            };
            let cfg = MomentConfig {
                rho: *rho,
                n_paths: *paths,
                dt: *dt,
                t_cap: *t_cap,
                seed: inputs.seed,
            };
            let study = escape_study(&m.spec, *y_inf, n_c, &cfg)?;
            if !study.passes() {
                out.status = Status::Refuted;
            }
            out.json("escape_moments.json", &study)?;
        }
    }
    Ok(out)
}

fn simulate(
    method: Method,
    mu: &MuSpec,
    t: f64,
    paths: usize,
    dt: f64,
    inputs: &Inputs,
    out: &mut Outputs,
) -> Result<(), CliError> {
    if method == Method::Path {
        let ModelConfig::Diffusion(m) = inputs.model else {
            unreachable!("checked above")
        };
        let x0 = vec![0.0; m.spec.dim];
        let n0 = m.spec.typical_capacity();
        let traj = simulate_diffusion(
            &m.spec,
            &x0,
            n0,
            &SimConfig { dt, t_max: t },
            &mut stream(inputs.seed, 0),
        )?;
        let mut csv = String::from("t,n");
        (0..m.spec.dim).for_each(|k| write!(csv, ",x{k}").unwrap());
        csv.push('\n');
        for ((s, x), n) in traj.times.iter().zip(&traj.xs).zip(&traj.ns) {
            write!(csv, "{s},{n}").unwrap();
            x.iter().for_each(|v| write!(csv, ",{v}").unwrap());
            csv.push('\n');
        }
        out.text("trajectory.csv", csv);
        out.json(
            "path.json",
            &json!({ "end": traj.end, "absorbed_at": traj.absorbed_at, "seed": inputs.seed }),
        )?;
        return Ok(());
    }
    let gen: SubMarkovGenerator = inputs.model.generator()?;
    let eigen = solve_eigentriple(&gen, inputs.tol, DEFAULT_MAX_ITER)?;
    let mu = mu.resolve(gen.len(), Some(&eigen))?;
    match method {
        Method::Naive => {
            let est = estimate_dcne_naive(&gen, &mu, t, paths, inputs.seed)?;
            let exact = dcne(&gen, &mu, t, inputs.tol)?;
            out.json(
                "estimate.json",
                &json!({
                    "estimate": est.estimate,
                    "stderr": est.stderr,
                    "ess": est.ess,
                    "seed": est.seed,
                    "survival": est.survival,
                    "survival_stderr": est.survival_stderr,
                    "exact": exact,
                    "tv_to_exact": tv_distance(&est.estimate, &exact)?,
                }),
            )?;
        }
        Method::FlemingViot => {
            let fv = fleming_viot(&gen, &mu, t, paths, inputs.seed, FvOptions::default())?;
            let estimate = fv.empirical(gen.len());
            let exact = dcne(&gen, &mu, t, inputs.tol)?;
            let stderr: Vec<f64> = estimate
                .weights()
                .iter()
                .map(|p| (p * (1.0 - p) / paths as f64).sqrt())
                .collect();
            out.json(
                "estimate.json",
                &json!({
                    "estimate": estimate,
                    "stderr": stderr,
                    "ess": paths,
                    "seed": inputs.seed,
                    "resamples": fv.resample_log,
                    "lambda0_estimate": fv.extinction_rate_estimate(),
                    "lambda0": eigen.lambda0,
                    "exact": exact,
                    "tv_to_exact": tv_distance(&estimate, &exact)?,
                }),
            )?;
        }
        Method::Qprocess => {
            let q = QProcess::new(&gen, &eigen)?;
            let x0 = mu.support()[0];
            let occ = q.occupation(x0, paths, &mut stream(inputs.seed, 0))?;
            let beta = eigen.beta();
            out.json(
                "estimate.json",
                &json!({
                    "estimate": occ,
                    "ess": paths,
                    "seed": inputs.seed,
                    "beta": beta,
                    "tv_to_beta": tv_distance(&occ, &beta)?,
                    "row_residual": q.row_residual,
                    "kernel_error": q.kernel_identity_error(&gen, t, inputs.tol)?,
                }),
            )?;
        }
        Method::Path => unreachable!("handled above"),
    }
    Ok(())
}
