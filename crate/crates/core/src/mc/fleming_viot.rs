//! Fleming–Viot particle system: killed particles restart from the position
//! of a uniformly chosen other particle.
//!
//! Time is cut into epochs. Within an epoch all particles are first run
//! independently (in parallel, one random stream per particle and epoch);
//! deaths are then replayed in time order, each dead particle taking the
//! current position of another and continuing on a fresh stream. The result
//! is an exact simulation that does not depend on the number of workers.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gillespie::{initial_sampler, run_jumps, JumpPath, JumpSampler};
use super::rng::{derive_seed, par_paths, stream};
use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::vector::ProbabilityVector;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochLog {
    pub start: f64,
    pub end: f64,
    pub resamples: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub positions: Vec<usize>,
    pub n_particles: usize,
    pub clock: f64,
    pub seed: u64,
    /// Total absorption-triggered resamples.
    pub resample_log: u64,
    pub epochs: Vec<EpochLog>,
}

impl ParticleEnsemble {
    pub fn empirical(&self, states: usize) -> ProbabilityVector {
        let mut w = vec![0.0; states];
        self.positions.iter().for_each(|&x| w[x] += 1.0);
        let n = self.n_particles as f64;
        w.iter_mut().for_each(|v| *v /= n);
        ProbabilityVector::from_computed(w)
    }

    /// Resamples per particle per unit time over epochs starting at or
    /// after `from`: an estimate of the extinction rate.
    pub fn resample_rate(&self, from: f64) -> f64 {
        let (count, span) = self
            .epochs
            .iter()
            .filter(|e| e.start >= from)
            .fold((0u64, 0.0), |(c, s), e| {
                (c + e.resamples, s + (e.end - e.start))
            });
        count as f64 / (self.n_particles as f64 * span)
    }

    /// Resample rate over the second half of the run.
    pub fn extinction_rate_estimate(&self) -> f64 {
        self.resample_rate(0.5 * self.clock)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FvOptions {
    /// Number of epochs; an even count lets the second half of the run be
    /// a union of whole epochs.
    pub epochs: usize,
}

impl Default for FvOptions {
    fn default() -> Self {
        Self { epochs: 64 }
    }
}

#[derive(PartialEq)]
struct Death {
    t: f64,
    i: usize,
}

impl Eq for Death {}

impl Ord for Death {
    // Min-heap on time, ties broken by particle index.
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then(other.i.cmp(&self.i))
    }
}

impl PartialOrd for Death {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Fleming–Viot estimate of `μA_t` with `n_particles` particles.
pub fn fleming_viot(
    gen: &SubMarkovGenerator,
    mu: &ProbabilityVector,
    t: f64,
    n_particles: usize,
    seed: u64,
    opts: FvOptions,
) -> Result<ParticleEnsemble> {
    gen.check_dim(mu.len())?;
    let start = initial_sampler(mu)?;
    let init_seed = derive_seed(seed, u64::MAX);
    let positions = (0..n_particles)
        .map(|i| start.sample(&mut stream(init_seed, i as u64)))
        .collect();
    fleming_viot_from(gen, positions, t, seed, opts)
}

/// Fleming–Viot from given particle positions.
pub fn fleming_viot_from(
    gen: &SubMarkovGenerator,
    mut positions: Vec<usize>,
    t: f64,
    seed: u64,
    opts: FvOptions,
) -> Result<ParticleEnsemble> {
    let n = positions.len();
    if n < 2 {
        return Err(QsdError::invalid(
            "Fleming–Viot needs at least two particles",
        ));
    }
    if let Some(&x) = positions.iter().find(|&&x| x >= gen.len()) {
        return Err(QsdError::invalid(format!(
            "particle position {x} outside the state set"
        )));
    }
    if !(t >= 0.0 && t.is_finite()) || opts.epochs == 0 {
        return Err(QsdError::invalid(
            "need a finite t >= 0 and at least one epoch",
        ));
    }
    let sampler = JumpSampler::new(gen);
    let tau = t / opts.epochs as f64;
    let mut epochs = Vec::with_capacity(opts.epochs);
    let mut total = 0;
    for e in 0..opts.epochs {
        let seed_e = derive_seed(seed, e as u64);
        let mut paths: Vec<JumpPath> = par_paths(seed_e, n, |i, rng| {
            let mut jumps = vec![(0.0, positions[i])];
            let (_, extinction) =
                run_jumps(&sampler, positions[i], tau, rng, |s, j| jumps.push((s, j)));
            JumpPath { jumps, extinction }
        });
        let mut queue: BinaryHeap<Death> = paths
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.extinction.map(|t| Death { t, i }))
            .collect();
        let mut picker = stream(seed_e, n as u64);
        let mut revivals = 0u64;
        while let Some(Death { t: u, i }) = queue.pop() {
            let mut j = picker.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let x = paths[j]
                .state_at(u)
                .expect("deaths are replayed in time order, so others are alive");
            revivals += 1;
            let mut rng = stream(seed_e, n as u64 + revivals);
            let path = &mut paths[i];
            path.jumps.push((u, x));
            let mut cont = Vec::new();
            let (_, death) =
                run_jumps(&sampler, x, tau - u, &mut rng, |s, k| cont.push((u + s, k)));
            path.jumps.extend(cont);
            path.extinction = death.map(|d| u + d);
            if let Some(d) = path.extinction {
                queue.push(Death { t: d, i });
            }
        }
        for (p, path) in positions.iter_mut().zip(&paths) {
            *p = path
                .jumps
                .last()
                .expect("paths start with their position")
                .1;
        }
        total += revivals;
        epochs.push(EpochLog {
            start: e as f64 * tau,
            end: (e + 1) as f64 * tau,
            resamples: revivals,
        });
    }
    Ok(ParticleEnsemble {
        positions,
        n_particles: n,
        clock: t,
        seed,
        resample_log: total,
        epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve_eigentriple;
    use crate::mc::rng::mean_stderr;
    use crate::vector::tv_distance;

    fn golden() -> SubMarkovGenerator {
        SubMarkovGenerator::from_triplets(2, &[(0, 1, 1.0), (1, 0, 1.0)], vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn no_killing_is_independent_simulation() {
        let g = SubMarkovGenerator::from_triplets(
            3,
            &[(0, 1, 1.0), (1, 2, 0.5), (2, 0, 2.0)],
            vec![0.0; 3],
        )
        .unwrap();
        let start = vec![0, 1, 2, 0, 1];
        let opts = FvOptions { epochs: 4 };
        let fv = fleming_viot_from(&g, start.clone(), 2.0, 17, opts).unwrap();
        assert_eq!(fv.resample_log, 0);
        let sampler = JumpSampler::new(&g);
        let mut pos = start;
        for e in 0..4 {
            let seed_e = derive_seed(17, e);
            for (i, p) in pos.iter_mut().enumerate() {
                *p = run_jumps(&sampler, *p, 0.5, &mut stream(seed_e, i as u64), |_, _| {})
                    .0
                    .unwrap();
            }
        }
        assert_eq!(fv.positions, pos);
    }

    #[test]
    fn golden_converges_to_the_qsd() {
        let g = golden();
        let pair = solve_eigentriple(&g, 1e-13, 100_000).unwrap();
        let mu = ProbabilityVector::dirac(2, 0).unwrap();
        let t = 20.0 / pair.lambda0;
        let fv = fleming_viot(&g, &mu, t, 4000, 3, FvOptions::default()).unwrap();
        let tv = tv_distance(&fv.empirical(2), &pair.alpha).unwrap();
        assert!(tv < 0.05, "tv {tv}");
        let rate = fv.extinction_rate_estimate();
        assert!((rate - pair.lambda0).abs() / pair.lambda0 < 0.05, "{rate}");
    }

    #[test]
    fn permuted_starts_give_the_same_law() {
        let g = golden();
        let a = vec![0, 0, 0, 1, 1, 1, 1, 1];
        let mut b = a.clone();
        b.reverse();
        let run = |start: &Vec<usize>, s: u64| {
            fleming_viot_from(&g, start.clone(), 1.0, s, FvOptions { epochs: 2 })
                .unwrap()
                .empirical(2)[0]
        };
        let xa: Vec<f64> = (0..3000).map(|s| run(&a, s)).collect();
        let xb: Vec<f64> = (0..3000).map(|s| run(&b, 10_000 + s)).collect();
        let (ma, sa) = mean_stderr(&xa);
        let (mb, sb) = mean_stderr(&xb);
        assert!(
            (ma - mb).abs() < 4.0 * (sa * sa + sb * sb).sqrt(),
            "{ma} vs {mb}"
        );
    }

    #[test]
    fn needs_two_particles() {
        assert!(fleming_viot_from(&golden(), vec![0], 1.0, 0, FvOptions::default()).is_err());
    }
}
