//! Event-driven simulation of the jump chain with a killing channel.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::rng::{mean_stderr, par_paths, PathRng};
use crate::error::{QsdError, Result};
use crate::generator::SubMarkovGenerator;
use crate::vector::ProbabilityVector;

/// Per-state jump tables: total leaving rate (including killing) and the
/// cumulative rates of the moves, killing last.
#[derive(Debug, Clone)]
pub struct JumpSampler {
    total: Vec<f64>,
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

/// Target index that stands for the cemetery.
const KILLED: usize = usize::MAX;

impl JumpSampler {
    pub fn new(gen: &SubMarkovGenerator) -> Self {
        let n = gen.len();
        let mut total = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for i in 0..n {
            let mut acc = 0.0;
            let mut t = Vec::new();
            let mut c = Vec::new();
            for (j, q) in gen.row(i) {
                if q > 0.0 {
                    acc += q;
                    t.push(j);
                    c.push(acc);
                }
            }
            if gen.kill(i) > 0.0 {
                acc += gen.kill(i);
                t.push(KILLED);
                c.push(acc);
            }
            total.push(acc);
            targets.push(t);
            cumulative.push(c);
        }
        Self {
            total,
            targets,
            cumulative,
        }
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    pub fn total_rate(&self, i: usize) -> f64 {
        self.total[i]
    }

    /// Next state after a jump from `i`; `None` is killing.
    pub fn jump(&self, i: usize, rng: &mut PathRng) -> Option<usize> {
        let c = &self.cumulative[i];
        let u = rng.random::<f64>() * self.total[i];
        let k = c.partition_point(|&x| x <= u).min(c.len() - 1);
        match self.targets[i][k] {
            KILLED => None,
            j => Some(j),
        }
    }
}

/// The jumps of one path: `(time, new state)`, starting with `(0, x0)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JumpPath {
    pub jumps: Vec<(f64, usize)>,
    pub extinction: Option<f64>,
}

impl JumpPath {
    pub fn state_at(&self, t: f64) -> Option<usize> {
        if self.extinction.is_some_and(|e| e <= t) {
            return None;
        }
        let k = self.jumps.partition_point(|&(s, _)| s <= t);
        Some(self.jumps[k.max(1) - 1].1)
    }

    pub fn final_state(&self) -> Option<usize> {
        match self.extinction {
            Some(_) => None,
            None => self.jumps.last().map(|j| j.1),
        }
    }
}

/// Runs from `x0` over `[0, duration]`, calling `on_jump(t, j)` after each move.
/// Returns the final state (or `None` if killed) and the killing time.
pub fn run_jumps(
    sampler: &JumpSampler,
    x0: usize,
    duration: f64,
    rng: &mut PathRng,
    mut on_jump: impl FnMut(f64, usize),
) -> (Option<usize>, Option<f64>) {
    let mut x = x0;
    let mut t = 0.0;
    loop {
        let rate = sampler.total_rate(x);
        if rate <= 0.0 {
            return (Some(x), None);
        }
        let wait: f64 = rng.sample::<f64, _>(Exp1) / rate;
        if t + wait > duration {
            return (Some(x), None);
        }
        t += wait;
        match sampler.jump(x, rng) {
            None => return (None, Some(t)),
            Some(j) => {
                x = j;
                on_jump(t, j);
            }
        }
    }
}

pub fn gillespie(
    gen: &SubMarkovGenerator,
    x0: usize,
    t_max: f64,
    rng: &mut PathRng,
) -> Result<JumpPath> {
    if x0 >= gen.len() {
        return Err(QsdError::invalid(format!(
            "state {x0} outside 0..{}",
            gen.len()
        )));
    }
    if !(t_max >= 0.0) {
        return Err(QsdError::invalid("t_max must be >= 0"));
    }
    let sampler = JumpSampler::new(gen);
    let mut jumps = vec![(0.0, x0)];
    let (_, extinction) = run_jumps(&sampler, x0, t_max, rng, |t, j| jumps.push((t, j)));
    Ok(JumpPath { jumps, extinction })
}

pub(crate) fn initial_sampler(mu: &ProbabilityVector) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(mu.weights()).map_err(|e| QsdError::invalid(format!("initial law: {e}")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DcneEstimate {
    pub estimate: ProbabilityVector,
    /// Per-state binomial standard error of the estimate.
    pub stderr: Vec<f64>,
    /// Number of surviving paths.
    pub ess: usize,
    /// Fraction of paths alive at `t`, with its standard error.
    pub survival: f64,
    pub survival_stderr: f64,
    pub seed: u64,
}

/// Law at `t` of the paths still alive, among `n_paths` started from `μ`.
pub fn estimate_dcne_naive(
    gen: &SubMarkovGenerator,
    mu: &ProbabilityVector,
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<DcneEstimate> {
    gen.check_dim(mu.len())?;
    if n_paths == 0 || !(t >= 0.0) {
        return Err(QsdError::invalid("need n_paths >= 1 and t >= 0"));
    }
    let sampler = JumpSampler::new(gen);
    let start = initial_sampler(mu)?;
    let finals = par_paths(seed, n_paths, |_, rng| {
        let x0 = start.sample(rng);
        run_jumps(&sampler, x0, t, rng, |_, _| {}).0
    });
    let alive: Vec<f64> = finals.iter().map(|f| f.map_or(0.0, |_| 1.0)).collect();
    let (survival, survival_stderr) = mean_stderr(&alive);
    let mut counts = vec![0.0; gen.len()];
    finals.iter().flatten().for_each(|&x| counts[x] += 1.0);
    let ess = finals.iter().flatten().count();
    if ess == 0 {
        return Err(QsdError::AllExtinct { n_paths });
    }
    let m = ess as f64;
    let weights: Vec<f64> = counts.iter().map(|c| c / m).collect();
    let stderr = weights.iter().map(|p| (p * (1.0 - p) / m).sqrt()).collect();
    Ok(DcneEstimate {
        estimate: ProbabilityVector::from_computed(weights),
        stderr,
        ess,
        survival,
        survival_stderr,
        seed,
    })
}
