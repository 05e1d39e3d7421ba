use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{indicator, Exhaustion};
use crate::eigen::{solve_eigentriple, DEFAULT_MAX_ITER};
use crate::error::Result;
use crate::generator::SubMarkovGenerator;
use crate::semigroup::{Uniformizer, DEFAULT_TOL};
use crate::vector::ProbabilityVector;

/// `inf { μA_t(target) : μ(D) ≥ ξ }` given `hit = P_t 1_target` and
/// `alive = P_t 1` (any common scale).
///
/// The objective is linear-fractional in `μ`, so the infimum sits at an
/// extreme point of the constraint set: a Dirac mass in `D`, or
/// `ξδ_x + (1-ξ)δ_y` with `x ∈ D`, `y ∉ D`.
pub fn retention_infimum(hit: &[f64], alive: &[f64], domain: &[usize], xi: f64) -> f64 {
    let ratio = |h: f64, a: f64| if a > 0.0 { h / a } else { 1.0 };
    let mut inside = vec![false; hit.len()];
    domain.iter().for_each(|&x| inside[x] = true);
    let mut best = domain
        .iter()
        .map(|&x| ratio(hit[x], alive[x]))
        .fold(f64::INFINITY, f64::min);
    if xi < 1.0 {
        let outside: Vec<usize> = (0..hit.len()).filter(|&y| !inside[y]).collect();
        let pair_min = domain
            .par_iter()
            .map(|&x| {
                outside
                    .iter()
                    .map(|&y| {
                        ratio(
                            xi * hit[x] + (1.0 - xi) * hit[y],
                            xi * alive[x] + (1.0 - xi) * alive[y],
                        )
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .reduce(|| f64::INFINITY, f64::min);
        best = best.min(pair_min);
    }
    best
}

/// Retention of the stress set in one exhaustion level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetentionRow {
    pub n: usize,
    /// `α(D_n)/2`: the retention level the search waits for.
    pub threshold: f64,
    /// First grid time after which every law keeps at least `threshold`.
    pub t_xt: Option<f64>,
    /// Smallest retained mass from `t_xt` on.
    pub xi_xt: Option<f64>,
    /// Per grid time: smallest `μA_t(D_n)` over the stress set.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetentionReport {
    pub t_grid: Vec<f64>,
    pub rows: Vec<RetentionRow>,
    /// Smallest level with a finite retention time.
    pub selected: Option<usize>,
}

/// Mass kept in each exhaustion level by `μA_t`, for `μ` ranging over all
/// Dirac masses plus `mus`.
pub fn verify_mass_retention(
    gen: &SubMarkovGenerator,
    exh: &Exhaustion,
    mus: &[ProbabilityVector],
    t_grid: &[f64],
) -> Result<RetentionReport> {
    exh.validate(gen.len())?;
    for mu in mus {
        gen.check_dim(mu.len())?;
    }
    let eigen = solve_eigentriple(gen, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let uni = Uniformizer::new(gen);
    let alive = uni.right_curve_scaled(&vec![1.0; gen.len()], t_grid, DEFAULT_TOL)?;
    let rows = (0..exh.len())
        .into_par_iter()
        .map(|n| {
            let set = exh.set(n);
            let hit = uni.right_curve_scaled(&indicator(set, gen.len()), t_grid, DEFAULT_TOL)?;
            let curve: Vec<f64> = hit
                .iter()
                .zip(&alive)
                .map(|(h, a)| {
                    let scale = (h.log_scale - a.log_scale).exp();
                    let dirac = h
                        .vector
                        .iter()
                        .zip(&a.vector)
                        .map(|(x, y)| if *y > 0.0 { scale * x / y } else { 1.0 })
                        .fold(f64::INFINITY, f64::min);
                    mus.iter()
                        .map(|mu| scale * mu.dot(&h.vector) / mu.dot(&a.vector))
                        .fold(dirac, f64::min)
                })
                .collect();
            let threshold = eigen.alpha.mass_on(set) / 2.0;
            // Last grid index where retention is below the threshold.
            let first_ok = match curve.iter().rposition(|&r| r < threshold) {
                None => Some(0),
                Some(i) if i + 1 < curve.len() => Some(i + 1),
                Some(_) => None,
            };
            Ok(RetentionRow {
                n,
                threshold,
                t_xt: first_ok.map(|i| t_grid[i]),
                xi_xt: first_ok.map(|i| curve[i..].iter().copied().fold(f64::INFINITY, f64::min)),
                curve,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let selected = rows.iter().find(|r| r.t_xt.is_some()).map(|r| r.n);
    Ok(RetentionReport {
        t_grid: t_grid.to_vec(),
        rows,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> SubMarkovGenerator {
        SubMarkovGenerator::from_triplets(
            4,
            &[
                (0, 1, 1.0),
                (1, 0, 1.0),
                (1, 2, 1.0),
                (2, 1, 1.0),
                (2, 3, 1.0),
                (3, 2, 1.0),
            ],
            vec![0.1, 0.1, 0.5, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn full_set_retains_everything() {
        let g = chain();
        let exh = Exhaustion::prefixes(&[2, 4], 0, 0, 1, 4).unwrap();
        let grid = [0.0, 0.5, 1.0, 5.0];
        let rep = verify_mass_retention(&g, &exh, &[], &grid).unwrap();
        let full = &rep.rows[1];
        assert_eq!(full.t_xt, Some(0.0));
        assert!((full.xi_xt.unwrap() - 1.0).abs() < 1e-12);
        let inner = &rep.rows[0];
        // A Dirac outside D_0 starts with zero retention.
        assert!(inner.curve[0] == 0.0 && inner.t_xt.unwrap() > 0.0);
    }

    #[test]
    fn qsd_retention_is_constant() {
        let g = chain();
        let pair = solve_eigentriple(&g, 1e-13, 100_000).unwrap();
        let uni = Uniformizer::new(&g);
        let set = [0usize, 1];
        for t in [0.3, 2.0, 7.0] {
            let (law, _) = uni.conditioned(&pair.alpha, t, 1e-13).unwrap();
            assert!((law.mass_on(&set) - pair.alpha.mass_on(&set)).abs() < 1e-10);
        }
    }

    #[test]
    fn extreme_points_bound_random_mixtures() {
        let hit = [0.9, 0.5, 0.1, 0.05];
        let alive = [1.0, 0.8, 0.6, 0.9];
        let d = [0usize, 1];
        let xi = 0.4;
        let inf = retention_infimum(&hit, &alive, &d, xi);
        let mut state = 12345u64;
        for _ in 0..2000 {
            let mut w: Vec<f64> = (0..4)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    (state >> 11) as f64 / (1u64 << 53) as f64
                })
                .collect();
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            if w[0] + w[1] < xi {
                continue;
            }
            let v = w.iter().zip(&hit).map(|(a, b)| a * b).sum::<f64>()
                / w.iter().zip(&alive).map(|(a, b)| a * b).sum::<f64>();
            assert!(v >= inf - 1e-15);
        }
    }
}
