//! Markdown summary of a run directory.

use std::fmt::Write as _;
use std::path::Path;

use qsd_core::QsdError;
use serde_json::Value;

use crate::manifest::Manifest;
use crate::task::{Status, Task};
use crate::{read, CliError};

fn load(run: &Path, name: &str) -> Result<Value, CliError> {
    Ok(serde_json::from_str(&read(&run.join(name))?).map_err(QsdError::from)?)
}

fn num(v: &Value) -> String {
    match v {
        Value::Number(n) if !n.is_f64() => n.to_string(),
        Value::Number(n) => {
            let x = n.as_f64().unwrap_or(f64::NAN);
            if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) {
                format!("{x:.6e}")
            } else {
                format!("{x:.6}")
            }
        }
        Value::Null => "—".into(),
        other => other.to_string(),
    }
}

fn table(s: &mut String, rows: &[(&str, String)]) {
    s.push_str("| quantity | value |\n|---|---|\n");
    for (k, v) in rows {
        writeln!(s, "| {k} | {v} |").unwrap();
    }
    s.push('\n');
}

fn certificates(s: &mut String, run: &Path) -> Result<(), CliError> {
    let certs = load(run, "certificates.json")?;
    s.push_str("## Certificates\n\n| assumption | verdict | constant | counterexample |\n|---|---|---|---|\n");
    for key in ["lj", "mix", "dc", "et", "sv"] {
        let c = &certs[key];
        let w = &c["witness"];
        let constant = match key {
            "et" => num(&w["e_t"]),
            "sv" => format!("c = {}, ρ = {}", num(&w["c"]), num(&w["rho_sv"])),
            "lj" => "—".into(),
            _ => num(&w["c"]),
        };
        let verdict = c["verdict"].as_str().unwrap_or("?");
        let (verdict, state) = if verdict == "holds" {
            ("holds".to_string(), String::new())
        } else {
            let state = match &c["state"] {
                Value::Number(n) => format!("**state {n}**: "),
                _ => String::new(),
            };
            (
                "**fails**".to_string(),
                format!("{state}{}", c["reason"].as_str().unwrap_or("")),
            )
        };
        writeln!(s, "| {key} | {verdict} | {constant} | {state} |").unwrap();
    }
    s.push('\n');
    if run.join("constants.json").exists() {
        let k = load(run, "constants.json")?;
        let c = &k["coupling"];
        s.push_str("## Derived constants\n\n");
        table(
            s,
            &[
                ("λ₀", num(&k["lambda0"])),
                ("spectral gap λ₁ − λ₀", num(&k["spectral_gap"])),
                ("ζ = −ln(1 − c_db/c_ps)/t_db", num(&k["zeta"])),
                (
                    "C(n, ξ) = 2·exp[ζ(t_ps + t_db + t_xt)]",
                    num(&k["prefactor"]),
                ),
                (
                    "t_db, c_db",
                    format!("{}, {}", num(&c["t_db"]), num(&c["c_db"])),
                ),
                (
                    "t_ps, c_ps",
                    format!("{}, {}", num(&c["t_ps"]), num(&c["c_ps"])),
                ),
                ("t_xt", num(&c["t_xt"])),
                ("e_T", num(&k["e_t"])),
                (
                    "ρ_sv < ρ_eT",
                    format!("{} < {}", num(&k["rho_sv"]), num(&k["rho_et"])),
                ),
                ("sup‖η_t‖ bound", num(&k["eta_sup_bound"])),
            ],
        );
    }
    Ok(())
}

pub fn render(run: &Path) -> Result<String, CliError> {
    let m = Manifest::load(run)?;
    let mut s = String::new();
    writeln!(s, "# qsd {} — {} model\n", m.task.name(), m.model.kind()).unwrap();
    writeln!(
        s,
        "seed {}, tolerance {:e}, qsd {}\n",
        m.seed, m.tol, m.version
    )
    .unwrap();
    match m.status {
        Some(Status::Refuted) => s.push_str("**Outcome: refuted.**\n\n"),
        Some(Status::Ok) => s.push_str("Outcome: ok.\n\n"),
        None => s.push_str("Outcome: not recorded.\n\n"),
    }
    match &m.task {
        Task::Solve { .. } => {
            let e = load(run, "eigen.json")?;
            s.push_str("## Eigen-triple\n\n");
            table(
                &mut s,
                &[
                    ("λ₀", num(&e["lambda0"])),
                    ("‖αQ + λ₀α‖₁", num(&e["residual_left"])),
                    ("‖Qη + λ₀η‖∞", num(&e["residual_right"])),
                    ("spectral gap", num(&e["spectral_gap"])),
                    ("fitted TV decay rate", num(&e["tv_decay_rate"])),
                    ("fitted η_t decay rate", num(&e["eta_decay_rate"])),
                    ("iterations", num(&e["iterations"])),
                ],
            );
        }
        Task::Verify { .. } => certificates(&mut s, run)?,
        Task::Couple { .. } => {
            certificates(&mut s, run)?;
            if run.join("coupling.json").exists() {
                let c = load(run, "coupling.json")?;
                s.push_str("## Coupling\n\n");
                table(
                    &mut s,
                    &[
                        ("steps J", num(&c["steps"])),
                        ("final residual r_J", num(&c["final_residual"])),
                        (
                            "largest identity deviation",
                            num(&c["max_identity_deviation"]),
                        ),
                        ("smallest domination slack", num(&c["min_domination_slack"])),
                        ("TV bound 2(1 − c̄)^J", num(&c["tv_bound"])),
                        ("dominated", num(&c["dominated"])),
                    ],
                );
            }
        }
        Task::Simulate { .. } => {
            let name = if run.join("estimate.json").exists() {
                "estimate.json"
            } else {
                "path.json"
            };
            let e = load(run, name)?;
            s.push_str("## Simulation\n\n");
            let rows: Vec<(&str, String)> = [
                "ess",
                "tv_to_exact",
                "tv_to_beta",
                "lambda0_estimate",
                "lambda0",
                "resamples",
                "row_residual",
                "kernel_error",
                "end",
                "absorbed_at",
            ]
            .into_iter()
            .filter(|k| e.get(*k).is_some())
            .map(|k| (k, num(&e[k])))
            .collect();
            table(&mut s, &rows);
        }
        Task::Nonuniformity { .. } => {
            let r = load(run, "nonuniformity.json")?;
            s.push_str("## Witness heights\n\n| height | TV to start 1 |\n|---|---|\n");
            for h in r["heights"].as_array().into_iter().flatten() {
                writeln!(s, "| {} | {} |", h["height"], num(&h["tv"])).unwrap();
            }
            writeln!(
                s,
                "\nwitness: {} (t = {}, ε = {}); escape probabilities decreasing: {}, within bound: {}\n",
                num(&r["witness"]),
                num(&r["t"]),
                num(&r["eps"]),
                r["escape_decreasing"],
                r["escape_within_bound"]
            )
            .unwrap();
            for w in r["warnings"].as_array().into_iter().flatten() {
                writeln!(s, "- warning: {}", w.as_str().unwrap_or("")).unwrap();
            }
        }
        Task::EscapeMoments { .. } => {
            let r = load(run, "escape_moments.json")?;
            let k = &r["constants"];
            s.push_str("## Linked constants\n\n");
            table(
                &mut s,
                &[
                    ("ρ", num(&r["rho"])),
                    ("C^Y", num(&k["c_y"])),
                    ("C^X", num(&k["c_x"])),
                    ("C_0", num(&k["c_0"])),
                ],
            );
            s.push_str(
                "| n_c | E^Y | E^X | E_0 | e_T | all inequalities |\n|---|---|---|---|---|---|\n",
            );
            let triples = r["triples"].as_array().cloned().unwrap_or_default();
            let checks = r["all"].as_array().cloned().unwrap_or_default();
            for (t, c) in triples.iter().zip(&checks) {
                let all = ["y_ok", "x_ok", "zero_ok", "combined_ok"]
                    .iter()
                    .all(|k| c[*k] == Value::Bool(true));
                writeln!(
                    s,
                    "| {} | {} | {} | {} | {} | {} |",
                    num(&t["decomposition"]["n_c"]),
                    num(&t["y_infinity"]["estimate"]),
                    num(&t["x_infinity"]["estimate"]),
                    num(&t["zero"]["estimate"]),
                    num(&c["e_t"]),
                    if all { "hold" } else { "**fail**" }
                )
                .unwrap();
            }
            s.push('\n');
        }
    }
    Ok(s)
}
