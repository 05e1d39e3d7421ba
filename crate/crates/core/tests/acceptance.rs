//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line (written straight to stderr so it survives output
//! capture) before asserting.

use std::io::Write as _;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use qsd_core::assumptions::{verify, DerivedConstants, Exhaustion, VerifyOptions};
use qsd_core::convergence::{fitted_decay_rate, profile_with};
use qsd_core::coupling::{run_coupling, verify_lower_bound, IDENTITY_TOL};
use qsd_core::eigen::{solve_eigentriple, spectral_gap, DEFAULT_MAX_ITER};
use qsd_core::grid::linear_grid;
use qsd_core::mc::fleming_viot::{fleming_viot, FvOptions};
use qsd_core::mc::gillespie::estimate_dcne_naive;
use qsd_core::mc::qprocess::QProcess;
use qsd_core::mc::rng::{stream, with_threads};
use qsd_core::models::bdc::{
    build_bdc, build_bdnu, nonuniformity_experiment, BdcParams, BdnuParams, BoundaryPolicy,
    RateFamily,
};
use qsd_core::models::csbp::{csbp_extinction, csbp_u_infinity, simulate_extinction};
use qsd_core::models::descent::{ydp_descent_check, DescentConfig};
use qsd_core::models::diffusion::DiffusionSpec;
use qsd_core::models::transitory::{escape_study, MomentConfig};
use qsd_core::semigroup::DEFAULT_TOL;
use qsd_core::{
    dcne, semigroup_apply, survival_capacity_t, tv_distance, EigenPair, ProbabilityVector,
    SubMarkovGenerator,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|p| p.into_inner())
}

fn verdict(n: u32, title: &str, ok: bool, elapsed: Duration, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let line = format!(
        "[acceptance {n:>2}] {tag} {title} ({:.2} s): {detail}\n",
        elapsed.as_secs_f64()
    );
    let mut err = std::io::stderr().lock();
    let _ = err.write_all(line.as_bytes());
    let _ = err.flush();
    assert!(ok, "criterion {n} failed: {detail}");
}

// ---------------------------------------------------------------- chains

fn phi() -> f64 {
    (1.0 + 5f64.sqrt()) / 2.0
}

/// Two states, swap at rate 1, killing at rate 1 from the first.
fn golden() -> SubMarkovGenerator {
    SubMarkovGenerator::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)], vec![1.0, 0.0]).unwrap()
}

fn golden_exhaustion() -> Exhaustion {
    Exhaustion::prefixes(&[1, 2], 0, 0, 1, 2).unwrap()
}

/// Non-reversible four-state ring with uneven killing.
fn ring() -> SubMarkovGenerator {
    let rates = [
        (0, 1, 2.0),
        (1, 2, 1.5),
        (2, 3, 1.0),
        (3, 0, 2.5),
        (1, 0, 0.3),
        (2, 0, 0.2),
    ];
    SubMarkovGenerator::from_triplets(4, &rates, vec![0.4, 0.0, 0.1, 0.7]).unwrap()
}

/// Linear births and deaths, catastrophes at rate 0.2n.
fn bdc_params(n_max: usize) -> BdcParams {
    let lin = |slope: f64| RateFamily::Linear {
        slope,
        intercept: 0.0,
    };
    BdcParams {
        b: lin(1.0),
        d: lin(1.0),
        c: lin(0.2),
        n_max,
        boundary: BoundaryPolicy::default(),
    }
}

fn bdc_exhaustion(top: usize, n_max: usize) -> Exhaustion {
    Exhaustion::prefixes(&[2, 5, top, n_max], 0, 1, 3, n_max).unwrap()
}

fn certified(gen: &SubMarkovGenerator, exh: &Exhaustion) -> DerivedConstants {
    let rep = verify(gen, exh, &VerifyOptions::default()).unwrap();
    assert!(rep.certificates.all_hold(), "{:?}", rep.certificates);
    rep.constants
        .unwrap_or_else(|| panic!("refuted: {:?}", rep.refutation))
}

fn eigen(gen: &SubMarkovGenerator) -> EigenPair {
    solve_eigentriple(gen, 1e-13, DEFAULT_MAX_ITER).unwrap()
}

fn diracs(n: usize) -> Vec<ProbabilityVector> {
    (0..n)
        .map(|i| ProbabilityVector::dirac(n, i).unwrap())
        .collect()
}

// ---------------------------------------------------------------- 1

#[test]
fn c01_golden_eigentriple() {
    let _g = serial();
    let t0 = Instant::now();
    let pair = eigen(&golden());
    let el = t0.elapsed();
    // Characteristic polynomial λ² − 3λ + 1 of −Q.
    let p = phi();
    let l0 = (3.0 - 5f64.sqrt()) / 2.0;
    let alpha = [1.0 / (1.0 + p), p / (1.0 + p)];
    let scale = (1.0 + p) / (2.0 + p);
    let eta = [scale, scale * p];
    let err = (pair.lambda0 - l0)
        .abs()
        .max(
            (0..2)
                .map(|i| (pair.alpha.weights()[i] - alpha[i]).abs())
                .fold(0.0, f64::max),
        )
        .max(
            (0..2)
                .map(|i| (pair.eta[i] - eta[i]).abs())
                .fold(0.0, f64::max),
        );
    let ok = err < 1e-8 && el < Duration::from_secs(1);
    verdict(
        1,
        "golden eigen-triple",
        ok,
        el,
        &format!("max error {err:.2e}"),
    );
}

// ---------------------------------------------------------------- 2

fn random_generator(rng: &mut ChaCha8Rng) -> (SubMarkovGenerator, DMatrix<f64>) {
    let n = rng.random_range(1..=8usize);
    let mut dense = DMatrix::zeros(n, n);
    let mut rates = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random_bool(0.6) {
                let q = rng.random_range(0.0..3.0);
                rates.push((i, j, q));
                dense[(i, j)] = q;
            }
        }
    }
    let kill: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                rng.random_range(0.0..2.0)
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..n {
        let out: f64 = (0..n).filter(|&j| j != i).map(|j| dense[(i, j)]).sum();
        dense[(i, i)] = -(out + kill[i]);
    }
    (
        SubMarkovGenerator::from_triplets(n, &rates, kill).unwrap(),
        dense,
    )
}

#[test]
fn c02_uniformization_against_dense_exponential() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (gen, q) = random_generator(&mut rng);
        let n = gen.len();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let mu = ProbabilityVector::normalized(w).unwrap();
        for t in [0.1, 1.0, 10.0] {
            let exact = (&q * t).exp();
            let row = DMatrix::from_row_slice(1, n, mu.weights()) * exact;
            let got = semigroup_apply(&gen, &mu, t, 1e-14).unwrap();
            let err: f64 = got
                .weights()
                .iter()
                .zip(row.iter())
                .map(|(a, b)| (a - b).abs())
                .sum();
            worst = worst.max(err);
        }
    }
    let el = t0.elapsed();
    let ok = worst < 1e-10 && el < Duration::from_secs(10);
    verdict(
        2,
        "uniformization vs dense exponential",
        ok,
        el,
        &format!("200 chains, worst ‖·‖₁ {worst:.2e}"),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn c03_coupling_induction() {
    let _g = serial();
    let t0 = Instant::now();
    let mut scenarios = 0;
    let mut worst_identity = 0.0f64;
    let mut worst_slack = f64::INFINITY;
    let mut failures = Vec::new();
    let cases: Vec<(SubMarkovGenerator, Exhaustion)> = vec![
        (golden(), golden_exhaustion()),
        (build_bdc(&bdc_params(20)).unwrap(), bdc_exhaustion(10, 20)),
    ];
    for (gen, exh) in &cases {
        let k = certified(gen, exh);
        let c = &k.coupling;
        let n = gen.len();
        let geometric =
            ProbabilityVector::normalized((0..n).map(|i| 0.5f64.powi(i as i32)).collect()).unwrap();
        let mus = vec![
            ProbabilityVector::dirac(n, 0).unwrap(),
            ProbabilityVector::dirac(n, n - 1).unwrap(),
            ProbabilityVector::normalized(
                (0..n)
                    .map(|i| {
                        if i == 0 {
                            0.3
                        } else if i == n - 1 {
                            0.7
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            )
            .unwrap(),
            ProbabilityVector::uniform(n).unwrap(),
            geometric,
        ];
        for mu in &mus {
            for steps in [2.5, 6.5] {
                let t_h = c.t_ps + steps * c.t_db;
                scenarios += 1;
                // Laws outside the coupling domain first relax for t_xt.
                let start = if c.t_xt > 0.0 {
                    dcne(gen, mu, c.t_xt, DEFAULT_TOL).unwrap()
                } else {
                    mu.clone()
                };
                let run = match run_coupling(gen, c, &start, t_h) {
                    Ok(r) => r,
                    Err(e) => {
                        failures.push(format!("n={n} t_h={t_h}: {e}"));
                        continue;
                    }
                };
                for row in &run.trace {
                    let step_ok = row.r > 0.0
                        && row.nu_min >= 0.0
                        && row.c.is_none_or(|cj| cj > 0.0 && cj <= c.c_db + 1e-12)
                        && row.residual_identity < IDENTITY_TOL;
                    if !step_ok {
                        failures.push(format!("n={n} t_h={t_h}: step {} rejected {row:?}", row.j));
                    }
                    worst_identity = worst_identity.max(row.residual_identity);
                }
                let t = t_h + c.t_xt;
                let lb = verify_lower_bound(gen, c, std::slice::from_ref(mu), &[(t, t)]).unwrap();
                worst_slack = worst_slack.min(lb.rows[0].min_slack);
                if let Err(e) = lb.check() {
                    failures.push(format!("n={n} t_h={t_h}: {e}"));
                }
            }
        }
    }
    let el = t0.elapsed();
    let ok = failures.is_empty() && scenarios == 20 && el < Duration::from_secs(60);
    verdict(
        3,
        "coupling induction",
        ok,
        el,
        &format!(
            "{scenarios} scenarios, worst residual identity {worst_identity:.2e}, min domination slack {worst_slack:.2e}{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn c04_rate_consistency() {
    let _g = serial();
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    // Slopes are fitted over the second half of the grid, late enough for
    // the next mode to have died out.
    let cases: Vec<(&str, SubMarkovGenerator, Exhaustion, f64)> = vec![
        ("golden", golden(), golden_exhaustion(), 20.0),
        (
            "bdc20",
            build_bdc(&bdc_params(20)).unwrap(),
            bdc_exhaustion(10, 20),
            40.0,
        ),
    ];
    for (name, gen, exh, t_end) in &cases {
        let k = certified(gen, exh);
        let pair = eigen(gen);
        let gap = spectral_gap(gen, &pair, 1e-12, DEFAULT_MAX_ITER).unwrap();
        let prof = profile_with(
            gen,
            &pair,
            &diracs(gen.len()),
            &linear_grid(0.0, *t_end, 81),
        )
        .unwrap();
        let rates: Vec<f64> = prof.tv_rates.iter().flatten().copied().collect();
        let lo = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = rates.iter().copied().fold(0.0, f64::max);
        let this = rates.len() == gen.len() && lo >= k.zeta && hi <= gap + 1e-6;
        ok &= this;
        lines.push(format!(
            "{name}: ζ {:.4} ≤ slopes [{lo:.6}, {hi:.6}] ≤ gap {gap:.6} (max excess {:+.1e})",
            k.zeta,
            hi - gap
        ));
        if *name == "golden" {
            // Second eigenvalue of −Q is (3+√5)/2, so the gap is √5.
            let rel = rates
                .iter()
                .map(|r: &f64| (r / 5f64.sqrt() - 1.0).abs())
                .fold(0.0, f64::max);
            ok &= rel < 0.01;
            lines.push(format!("golden slope vs √5 rel. error {rel:.2e}"));
        }
    }
    let el = t0.elapsed();
    verdict(
        4,
        "TV decay rate between ζ and the gap",
        ok,
        el,
        &lines.join("; "),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn c05_bdc_regime() {
    let _g = serial();
    let t0 = Instant::now();
    let params = bdc_params(400);
    let gen = build_bdc(&params).unwrap();
    let rep = verify(&gen, &bdc_exhaustion(20, 400), &VerifyOptions::default()).unwrap();
    let el = t0.elapsed();
    let bound = params.min_total_rate();
    let held: Vec<String> = rep
        .certificates
        .iter()
        .map(|c| {
            format!(
                "{:?}:{}",
                c.kind(),
                if c.holds() { "holds" } else { "fails" }
            )
        })
        .collect();
    let l0 = rep.constants.as_ref().map_or(f64::NAN, |k| k.lambda0);
    // The catastrophe rate 0.2n grows without bound, so it eventually
    // exceeds inf(b + d + c) = 2.2.
    let ok = rep.certificates.all_hold()
        && !rep.refuted()
        && l0 <= bound + 1e-8
        && el < Duration::from_secs(60);
    verdict(
        5,
        "BDC with growing catastrophes, N = 400",
        ok,
        el,
        &format!("{}; λ₀ {l0:.6} ≤ {bound}", held.join(" ")),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn c06_nonuniform_convergence() {
    let _g = serial();
    let t0 = Instant::now();
    let params = BdnuParams {
        b1: 1.0,
        c1: 0.5,
        b_bar: 2.0,
        d_bar: 1.0,
        c2: 2.0,
        n_max: 1 << 14,
    };
    let heights: Vec<usize> = (0..=14).map(|m| 1usize << m).collect();
    let levels: Vec<u32> = (1..=12).collect();
    let rep = nonuniformity_experiment(&params, 5.0, 0.1, &heights, &levels).unwrap();
    let el = t0.elapsed();
    let tv = rep.heights.last().map_or(0.0, |h| h.tv);
    let ok = rep.witness.is_some()
        && tv >= 0.9
        && rep.escape_decreasing
        && rep.escape_within_bound
        && el < Duration::from_secs(300);
    let first = rep.escape.first().map_or(f64::NAN, |e| e.prob);
    let last = rep.escape.last().map_or(f64::NAN, |e| e.prob);
    verdict(
        6,
        "non-uniform convergence, N = 2^14",
        ok,
        el,
        &format!(
            "witness {:?} with TV {tv:.4}; escape {first:.3e} → {last:.3e} over {} levels, decreasing {}, within bound {}",
            rep.witness,
            rep.escape.len(),
            rep.escape_decreasing,
            rep.escape_within_bound
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn c07_qprocess_identities() {
    let _g = serial();
    let t0 = Instant::now();
    let bdnu = BdnuParams {
        b1: 1.0,
        c1: 0.5,
        b_bar: 2.0,
        d_bar: 1.0,
        c2: 2.0,
        n_max: 48,
    };
    let chains: Vec<(&str, SubMarkovGenerator)> = vec![
        ("golden", golden()),
        ("ring", ring()),
        ("bdc20", build_bdc(&bdc_params(20)).unwrap()),
        ("bdnu48", build_bdnu(&bdnu).unwrap()),
    ];
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, gen) in &chains {
        let pair = eigen(gen);
        let q = QProcess::new(gen, &pair).unwrap();
        let rows = q.row_sums().iter().map(|s| s.abs()).fold(0.0, f64::max);
        let kernel = [0.1, 1.0, 5.0]
            .iter()
            .map(|&t| q.kernel_identity_error(gen, t, DEFAULT_TOL).unwrap())
            .fold(0.0, f64::max);
        ok &= rows < 1e-12 && q.row_residual < 1e-9 && kernel < 1e-9;
        let mut detail = format!("{name}: row sums {rows:.1e}, kernel {kernel:.1e}");
        if matches!(*name, "golden" | "ring" | "bdc20") {
            let mut rng = stream(70, 0);
            let occ = q.occupation(0, 1_000_000, &mut rng).unwrap();
            let tv = tv_distance(&occ, &pair.beta()).unwrap();
            ok &= tv < 0.02;
            detail.push_str(&format!(", occupation TV {tv:.4}"));
        }
        lines.push(detail);
    }
    let el = t0.elapsed();
    verdict(7, "Q-process identities", ok, el, &lines.join("; "));
}

// ---------------------------------------------------------------- 8

#[test]
fn c08_survival_capacity_convergence() {
    let _g = serial();
    let t0 = Instant::now();
    let mut ok = true;
    let mut lines = Vec::new();
    let cases: Vec<(&str, SubMarkovGenerator, Exhaustion, f64)> = vec![
        ("golden", golden(), golden_exhaustion(), 20.0),
        (
            "bdc20",
            build_bdc(&bdc_params(20)).unwrap(),
            bdc_exhaustion(10, 20),
            40.0,
        ),
    ];
    for (name, gen, exh, t_end) in &cases {
        let k = certified(gen, exh);
        let pair = eigen(gen);
        let grid = linear_grid(0.0, *t_end, 81);
        let prof = profile_with(gen, &pair, &diracs(gen.len()), &grid).unwrap();
        let rates: Vec<f64> = prof.eta_rates.iter().flatten().copied().collect();
        let slowest = rates.iter().copied().fold(f64::INFINITY, f64::min);
        // Independent evaluation of sup_t max_x η_t(x) on a finer grid.
        let mut sup = 0.0f64;
        for t in linear_grid(0.0, *t_end, 201) {
            for x in 0..gen.len() {
                sup = sup.max(survival_capacity_t(gen, x, t, pair.lambda0, DEFAULT_TOL).unwrap());
            }
        }
        let this = rates.len() == gen.len()
            && slowest >= k.zeta
            && sup.is_finite()
            && sup <= k.eta_sup_bound;
        ok &= this;
        lines.push(format!(
            "{name}: η_t decay ≥ {slowest:.4} (ζ {:.4}), sup ‖η_t‖ {sup:.4} ≤ {:.4}",
            k.zeta, k.eta_sup_bound
        ));
    }
    // The η deviation on the golden chain is a single exponential at rate √5.
    let g = golden();
    let pair = eigen(&g);
    let ts = linear_grid(1.0, 8.0, 15);
    let dev: Vec<f64> = ts
        .iter()
        .map(|&t| {
            (survival_capacity_t(&g, 0, t, pair.lambda0, DEFAULT_TOL).unwrap() - pair.eta[0]).abs()
        })
        .collect();
    let rate = fitted_decay_rate(&ts, &dev, 1e-13).unwrap_or(f64::NAN);
    let rel = (rate / 5f64.sqrt() - 1.0).abs();
    ok &= rel < 0.01;
    lines.push(format!("golden η_t rate {rate:.6} vs √5"));
    let el = t0.elapsed();
    verdict(
        8,
        "survival capacity convergence",
        ok,
        el,
        &lines.join("; "),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn c09_csbp_extinction() {
    let _g = serial();
    let t0 = Instant::now();
    let (z0, sigma, t, dt, paths): (f64, f64, f64, f64, usize) = (1.0, 1.0, 1.0, 1e-3, 100_000);
    let mut ok = true;
    let mut lines = Vec::new();
    for (r, seed) in [(0.0f64, 91u64), (0.5, 92)] {
        let exact = if r == 0.0 {
            (-2.0 * z0 / (sigma * sigma * t)).exp()
        } else {
            // Solution of u' = ru − σ²u²/2 started from +∞.
            let u = 2.0 * r / (sigma * sigma * (1.0 - (-r * t).exp()));
            let ode = csbp_u_infinity(r, sigma, t).unwrap().u_inf;
            ok &= ((ode - u) / u).abs() < 1e-8;
            (-z0 * u).exp()
        };
        let ode = csbp_extinction(z0, r, sigma, t).unwrap();
        let mc = simulate_extinction(z0, r, sigma, t, dt, paths, seed).unwrap();
        let z = (mc.estimate - ode).abs() / mc.stderr;
        ok &= (ode - exact).abs() < 1e-8 && z < 3.0;
        lines.push(format!(
            "r₊ = {r}: MC {:.5} ± {:.5}, Riccati {ode:.5}, closed form {exact:.5} ({z:.2}σ)",
            mc.estimate, mc.stderr
        ));
    }
    let el = t0.elapsed();
    ok &= el < Duration::from_secs(120);
    verdict(
        9,
        "CSBP extinction probabilities",
        ok,
        el,
        &lines.join("; "),
    );
}

// ---------------------------------------------------------------- 10

fn escape_config(n_paths: usize, seed: u64) -> MomentConfig {
    MomentConfig {
        rho: 4.0,
        n_paths,
        dt: 1e-3,
        t_cap: 50.0,
        seed,
    }
}

#[test]
fn c10_escape_moment_inequalities() {
    let _g = serial();
    let t0 = Instant::now();
    let spec = DiffusionSpec::quadratic_well();
    let study = escape_study(&spec, 2.0, &[4.0, 5.0, 6.0, 7.0], &escape_config(2000, 10)).unwrap();
    let el = t0.elapsed();
    let held = study.held_out.iter().all(|c| c.all());
    let k = &study.constants;
    let worst_et = study.all.iter().map(|c| c.e_t).fold(0.0, f64::max);
    let ok = held && study.passes();
    verdict(
        10,
        "escape-moment inequalities (statistical, 95%)",
        ok,
        el,
        &format!(
            "C^Y {:.3}, C^X {:.3}, C_0 {:.3}; max e_T {worst_et:.3} ≤ {:.3}; held-out {held}, all {}",
            k.c_y,
            k.c_x,
            k.c_0,
            k.combined_bound(),
            study.passes()
        ),
    );
}

// ---------------------------------------------------------------- 11

#[test]
fn c11_fleming_viot() {
    let _g = serial();
    let t0 = Instant::now();
    let mut ok = true;
    let mut lines = Vec::new();
    for (name, gen, seed) in [
        ("golden", golden(), 111u64),
        ("bdc20", build_bdc(&bdc_params(20)).unwrap(), 112),
    ] {
        let pair = eigen(&gen);
        let t = 20.0 / pair.lambda0;
        let mu = ProbabilityVector::dirac(gen.len(), 0).unwrap();
        let ens = fleming_viot(&gen, &mu, t, 10_000, seed, FvOptions::default()).unwrap();
        let tv = tv_distance(&ens.empirical(gen.len()), &pair.alpha).unwrap();
        let est = ens.extinction_rate_estimate();
        let rel = (est / pair.lambda0 - 1.0).abs();
        ok &= tv < 0.05 && rel < 0.05;
        lines.push(format!(
            "{name}: TV {tv:.4}, λ₀ {est:.5} vs {:.5} ({:.2}%)",
            pair.lambda0,
            100.0 * rel
        ));
    }
    let el = t0.elapsed();
    verdict(
        11,
        "Fleming–Viot consistency, N = 10^4",
        ok,
        el,
        &lines.join("; "),
    );
}

// ---------------------------------------------------------------- 12

/// Every stochastic estimator of the suite, at reduced size, serialized.
fn stochastic_fingerprint() -> Vec<String> {
    let g = golden();
    let bdc = build_bdc(&bdc_params(20)).unwrap();
    let pair = eigen(&g);
    let mu = ProbabilityVector::uniform(2).unwrap();
    let json = |v: &dyn erased::Json| v.to_json();
    let mut out = Vec::new();
    out.push(json(
        &estimate_dcne_naive(
            &bdc,
            &ProbabilityVector::dirac(20, 3).unwrap(),
            2.0,
            5000,
            1,
        )
        .unwrap(),
    ));
    out.push(json(
        &fleming_viot(
            &bdc,
            &ProbabilityVector::dirac(20, 0).unwrap(),
            5.0,
            500,
            2,
            FvOptions::default(),
        )
        .unwrap(),
    ));
    out.push(json(
        &fleming_viot(&g, &mu, 10.0, 300, 3, FvOptions { epochs: 7 }).unwrap(),
    ));
    let q = QProcess::new(&g, &pair).unwrap();
    out.push(json(&q.occupation(1, 10_000, &mut stream(4, 0)).unwrap()));
    out.push(json(
        &simulate_extinction(1.0, 0.5, 1.0, 1.0, 1e-2, 2000, 5).unwrap(),
    ));
    let spec = DiffusionSpec::quadratic_well();
    out.push(json(
        &escape_study(
            &spec,
            2.0,
            &[4.0, 5.0],
            &MomentConfig {
                rho: 4.0,
                n_paths: 40,
                dt: 1e-2,
                t_cap: 10.0,
                seed: 6,
            },
        )
        .unwrap(),
    ));
    out.push(json(
        &ydp_descent_check(&DescentConfig {
            r_d: 1.0,
            c_y: 1.0,
            t_d: 1.0,
            y_grid: vec![5.0, 50.0],
            r_sweep: vec![1.0, 0.5],
            n_paths: 200,
            dt: 1e-3,
            seed: 7,
        })
        .unwrap(),
    ));
    out
}

mod erased {
    pub trait Json {
        fn to_json(&self) -> String;
    }
    impl<T: serde::Serialize> Json for T {
        fn to_json(&self) -> String {
            serde_json::to_string(self).unwrap()
        }
    }
}

#[test]
fn c12_determinism_across_workers() {
    let _g = serial();
    let t0 = Instant::now();
    let runs: Vec<Vec<String>> = [1, 4, 8]
        .iter()
        .map(|&w| with_threads(w, stochastic_fingerprint))
        .collect();
    let el = t0.elapsed();
    let mismatched: Vec<usize> = (0..runs[0].len())
        .filter(|&i| runs.iter().any(|r| r[i] != runs[0][i]))
        .collect();
    let ok = mismatched.is_empty();
    verdict(
        12,
        "bitwise determinism over 1, 4, 8 workers",
        ok,
        el,
        &format!(
            "{} estimators compared, mismatches at {mismatched:?}",
            runs[0].len()
        ),
    );
}
