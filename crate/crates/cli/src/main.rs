//! `qsd`: batch front-end for the quasi-stationary laboratory.
//!
//! Exit codes: 0 success, 2 a hypothesis was refuted, 1 error.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod manifest;
mod report;
mod task;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qsd_core::assumptions::{Exhaustion, VerifyOptions};
use qsd_core::models::{ModelConfig, MuSpec};
use qsd_core::QsdError;
use thiserror::Error;

use manifest::Manifest;
use task::{Method, Status, Task};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] QsdError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("replay differs from the recorded run: {0}")]
    ReplayMismatch(String),
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Parser)]
#[command(
    name = "qsd",
    version,
    about = "Quasi-stationary distributions: solve, verify, couple, simulate"
)]
struct Cli {
    /// Model JSON (`kind`: generator, bdc, bdnu or diffusion).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Exhaustion JSON: `{"sets": [...], "s", "c", "m"}` or `{"prefixes": [...], "s", "c", "m"}`.
    #[arg(long, global = true)]
    exhaustion: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accuracy of the exact numerics.
    #[arg(long, global = true, default_value_t = 1e-12)]
    tol: f64,
    /// Worker threads (overridden by QSD_THREADS); results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MuArg {
    /// Initial law: delta:k (1-based), uniform, alpha, a JSON array, or a file holding one.
    #[arg(long, default_value = "delta:1")]
    mu: String,
}

impl MuArg {
    fn spec(&self) -> Result<MuSpec, CliError> {
        let forms = self.mu.starts_with("delta:") || self.mu == "uniform" || self.mu == "alpha";
        let path = Path::new(&self.mu);
        if !forms && !self.mu.trim_start().starts_with('[') && path.exists() {
            return Ok(MuSpec::parse(&read(path)?)?);
        }
        Ok(MuSpec::parse(&self.mu)?)
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// JSON file with verification options (mixing time, escape rate, time grid).
    #[arg(long)]
    options: Option<PathBuf>,
}

impl VerifyArgs {
    fn options(&self) -> Result<VerifyOptions, CliError> {
        match &self.options {
            None => Ok(VerifyOptions::default()),
            Some(p) => Ok(serde_json::from_str(&read(p)?).map_err(QsdError::from)?),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Eigen-triple and convergence profile.
    Solve {
        #[command(flatten)]
        mu: MuArg,
        /// End of the convergence time grid.
        #[arg(long, default_value_t = 50.0)]
        t_max: f64,
    },
    /// The five assumption certificates and the coupling constants.
    Verify {
        #[command(flatten)]
        verify: VerifyArgs,
    },
    /// Runs the coupling induction up to a horizon.
    Couple {
        #[command(flatten)]
        verify: VerifyArgs,
        #[command(flatten)]
        mu: MuArg,
        #[arg(long)]
        t_h: f64,
    },
    /// Monte Carlo estimates checked against the exact engine.
    Simulate {
        #[arg(long, value_enum, default_value = "naive")]
        method: Method,
        #[command(flatten)]
        mu: MuArg,
        #[arg(long)]
        t: f64,
        /// Paths, particles, or jumps for the conditioned process.
        #[arg(long, default_value_t = 10_000)]
        paths: usize,
        /// Sampling step for diffusion paths.
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
    },
    /// Non-uniform convergence experiment for a bdnu model.
    Nonuniformity {
        #[arg(long, default_value_t = 5.0)]
        t: f64,
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
        /// Starting heights (default: powers of two within the truncation).
        #[arg(long, value_delimiter = ',')]
        heights: Vec<usize>,
        /// Escape levels n (default: all that fit).
        #[arg(long, value_delimiter = ',')]
        levels: Vec<u32>,
    },
    /// Escape-moment study for a diffusion model.
    EscapeMoments {
        #[arg(long, default_value_t = 2.0)]
        y_inf: f64,
        #[arg(long, value_delimiter = ',', default_value = "4,5,6,7")]
        n_c: Vec<f64>,
        #[arg(long, default_value_t = 4.0)]
        rho: f64,
        #[arg(long, default_value_t = 2000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 50.0)]
        t_cap: f64,
    },
    /// Markdown summary of a run directory.
    Report { run: PathBuf },
    /// Re-runs a recorded run and checks the outputs are byte-identical.
    Replay { run: PathBuf },
}

fn powers_of_two(limit: usize) -> impl Iterator<Item = usize> {
    (0..usize::BITS)
        .map(|k| 1usize << k)
        .take_while(move |&h| h <= limit)
}

fn build_task(command: Command, model: &ModelConfig) -> Result<Task, CliError> {
    Ok(match command {
        Command::Solve { mu, t_max } => Task::Solve {
            mu: mu.spec()?,
            t_max,
        },
        Command::Verify { verify } => Task::Verify {
            options: verify.options()?,
        },
        Command::Couple { verify, mu, t_h } => Task::Couple {
            options: verify.options()?,
            mu: mu.spec()?,
            t_h,
        },
        Command::Simulate {
            method,
            mu,
            t,
            paths,
            dt,
        } => Task::Simulate {
            method,
            mu: mu.spec()?,
            t,
            paths,
            dt,
        },
        Command::Nonuniformity {
            t,
            eps,
            heights,
            levels,
        } => {
            let n_max = match model {
                ModelConfig::Bdnu(p) => p.n_max,
                _ => 0,
            };
            Task::Nonuniformity {
                t,
                eps,
                heights: if heights.is_empty() {
                    powers_of_two(n_max).collect()
                } else {
                    heights
                },
                levels: if levels.is_empty() {
                    (1..usize::BITS)
                        .take_while(|&n| (1usize << (n + 1)) <= n_max + 1)
                        .collect()
                } else {
                    levels
                },
            }
        }
        Command::EscapeMoments {
            y_inf,
            n_c,
            rho,
            paths,
            dt,
            t_cap,
        } => Task::EscapeMoments {
            y_inf,
            n_c,
            rho,
            paths,
            dt,
            t_cap,
        },
        Command::Report { .. } | Command::Replay { .. } => unreachable!("handled before"),
    })
}

fn configure_threads(flag: Option<usize>) -> Result<(), CliError> {
    let env = match std::env::var("QSD_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
            CliError::Usage(format!("QSD_THREADS must be a positive integer, got `{v}`"))
        })?),
        Err(_) => None,
    };
    if let Some(n) = env.or(flag) {
        if n == 0 {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn status_code(status: Status) -> ExitCode {
    match status {
        Status::Ok => ExitCode::SUCCESS,
        Status::Refuted => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    configure_threads(cli.threads)?;
    match cli.command {
        Command::Report { run } => {
            let text = report::render(&run)?;
            match &cli.out {
                Some(out) => write(out, text.as_bytes())?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { run } => {
            let recorded = Manifest::load(&run)?;
            let out = cli.out.unwrap_or_else(|| run.join("replay"));
            let status = manifest::replay(&recorded, &run, &out)?;
            println!(
                "replay of {} is byte-identical ({})",
                run.display(),
                out.display()
            );
            Ok(status_code(status))
        }
        command => {
            let model_path = cli
                .model
                .as_ref()
                .ok_or_else(|| CliError::Usage("--model is required".into()))?;
            let model = ModelConfig::from_json_str(&read(model_path)?)?;
            let task = build_task(command, &model)?;
            task.check_model(&model)?;
            let exhaustion = match &cli.exhaustion {
                Some(p) => Some(Exhaustion::from_json_str(
                    &read(p)?,
                    model.generator()?.len(),
                )?),
                None if task.needs_exhaustion() => {
                    return Err(CliError::Usage(format!(
                        "{} needs --exhaustion",
                        task.name()
                    )))
                }
                None => None,
            };
            let manifest = Manifest::new(cli.seed, cli.tol, model, exhaustion, task);
            let out = cli.out.unwrap_or_else(|| PathBuf::from("qsd-run"));
            let status = manifest.execute_into(&out)?;
            if status == Status::Refuted {
                eprintln!("refuted: see {}", out.display());
            }
            Ok(status_code(status))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
