//! Sparse sub-Markovian rate matrices on a finite ordered state set.
//!
//! A [`SubMarkovGenerator`] stores the off-diagonal rates `q(i, j) >= 0` in
//! compressed rows together with a per-state kill rate `κ(i) >= 0` (the flow
//! to the cemetery). The diagonal is implied:
//! `q(i, i) = -(Σ_{j≠i} q(i, j) + κ(i))`, so every row sums to `-κ(i) <= 0`.

use serde::{Deserialize, Serialize};

use crate::error::{QsdError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SubMarkovGenerator {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    kill: Vec<f64>,
    out_rate: Vec<f64>,
}

/// Largest state space the model builders will construct.
pub const MAX_STATES: usize = 1 << 24;

/// JSON layout: `{"states": S, "rates": [[i, j, q], ...], "kill": [κ_0, ...]}`
/// with 0-based indices.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeneratorDoc {
    pub states: usize,
    pub rates: Vec<(usize, usize, f64)>,
    pub kill: Vec<f64>,
}

impl SubMarkovGenerator {
    /// Builds a generator from `(from, to, rate)` triplets. Duplicate pairs are
    /// summed and zero rates dropped.
    pub fn from_triplets(
        states: usize,
        rates: &[(usize, usize, f64)],
        kill: Vec<f64>,
    ) -> Result<Self> {
        if states == 0 {
            return Err(QsdError::InvalidGenerator("state set is empty".into()));
        }
        if kill.len() != states {
            return Err(QsdError::DimensionMismatch {
                expected: states,
                got: kill.len(),
            });
        }
        for (i, &k) in kill.iter().enumerate() {
            if !k.is_finite() || k < 0.0 {
                return Err(QsdError::InvalidGenerator(format!(
                    "kill rate of state {i} must be finite and >= 0, got {k}"
                )));
            }
        }
        let mut triplets = Vec::with_capacity(rates.len());
        for &(i, j, q) in rates {
            if i >= states || j >= states {
                return Err(QsdError::InvalidGenerator(format!(
                    "rate ({i}, {j}) outside state set of size {states}"
                )));
            }
            if i == j {
                return Err(QsdError::InvalidGenerator(format!(
                    "diagonal entry ({i}, {i}) must not be given explicitly"
                )));
            }
            if !q.is_finite() || q < 0.0 {
                return Err(QsdError::InvalidGenerator(format!(
                    "rate ({i}, {j}) must be finite and >= 0, got {q}"
                )));
            }
            if q > 0.0 {
                triplets.push((i, j, q));
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));

        let mut row_ptr = vec![0usize; states + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, q) in triplets {
            if last == Some((i, j)) {
                *vals.last_mut().expect("duplicate follows an entry") += q;
                continue;
            }
            cols.push(j);
            vals.push(q);
            row_ptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..states {
            row_ptr[i + 1] += row_ptr[i];
        }
        let out_rate: Vec<f64> = (0..states)
            .map(|i| vals[row_ptr[i]..row_ptr[i + 1]].iter().sum::<f64>() + kill[i])
            .collect();
        // Summed duplicates or large rows can overflow.
        if let Some(i) = out_rate.iter().position(|r| !r.is_finite()) {
            return Err(QsdError::InvalidGenerator(format!(
                "total rate out of state {i} overflows"
            )));
        }
        Ok(Self {
            row_ptr,
            cols,
            vals,
            kill,
            out_rate,
        })
    }

    pub fn from_doc(doc: &GeneratorDoc) -> Result<Self> {
        Self::from_triplets(doc.states, &doc.rates, doc.kill.clone())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: GeneratorDoc = serde_json::from_str(s)?;
        Self::from_doc(&doc)
    }

    pub fn to_doc(&self) -> GeneratorDoc {
        let mut rates = Vec::with_capacity(self.vals.len());
        for i in 0..self.len() {
            for (j, q) in self.row(i) {
                rates.push((i, j, q));
            }
        }
        GeneratorDoc {
            states: self.len(),
            rates,
            kill: self.kill.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.kill.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kill.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Off-diagonal entries of row `i` as `(column, rate)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(pos) => self.vals[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn kill(&self, i: usize) -> f64 {
        self.kill[i]
    }

    pub fn kill_rates(&self) -> &[f64] {
        &self.kill
    }

    /// Total exit rate `-q(i, i)`.
    pub fn out_rate(&self, i: usize) -> f64 {
        self.out_rate[i]
    }

    pub fn diag(&self, i: usize) -> f64 {
        -self.out_rate[i]
    }

    /// `Λ = max_i |q(i, i)|`.
    pub fn uniformization_rate(&self) -> f64 {
        self.out_rate.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_conservative(&self) -> bool {
        self.kill.iter().all(|&k| k == 0.0)
    }

    pub(crate) fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.len() {
            return Err(QsdError::DimensionMismatch {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    /// `out = v Q` (row vector times generator).
    pub fn left_mul(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut()
            .zip(v.iter().zip(&self.out_rate))
            .for_each(|(o, (x, d))| *o = -x * d);
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (j, q) in self.row(i) {
                out[j] += vi * q;
            }
        }
    }

    /// `out = Q f` (generator applied to a function).
    pub fn right_mul(&self, f: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = -self.out_rate[i] * f[i];
            for (j, q) in self.row(i) {
                acc += q * f[j];
            }
            *o = acc;
        }
    }

    /// The process killed on leaving `subset`. The returned generator is
    /// indexed by position in `subset`; rates into the complement become kill.
    pub fn restrict(&self, subset: &[usize]) -> Result<Self> {
        if subset.is_empty() {
            return Err(QsdError::EmptyDomain);
        }
        let mut pos = vec![usize::MAX; self.len()];
        for (p, &s) in subset.iter().enumerate() {
            if s >= self.len() {
                return Err(QsdError::invalid(format!("state {s} out of range")));
            }
            if pos[s] != usize::MAX {
                return Err(QsdError::invalid(format!("state {s} listed twice")));
            }
            pos[s] = p;
        }
        let mut rates = Vec::new();
        let mut kill = Vec::with_capacity(subset.len());
        for (p, &s) in subset.iter().enumerate() {
            let mut k = self.kill[s];
            for (j, q) in self.row(s) {
                if pos[j] == usize::MAX {
                    k += q;
                } else {
                    rates.push((p, pos[j], q));
                }
            }
            kill.push(k);
        }
        Self::from_triplets(subset.len(), &rates, kill)
    }

    /// Conservative generator on `S + 1` states in which the kill flow is sent
    /// to an explicit absorbing state with index `S`.
    pub fn with_cemetery_state(&self) -> Self {
        let n = self.len();
        let mut rates: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + n);
        for i in 0..n {
            rates.extend(self.row(i).map(|(j, q)| (i, j, q)));
            if self.kill[i] > 0.0 {
                rates.push((i, n, self.kill[i]));
            }
        }
        Self::from_triplets(n + 1, &rates, vec![0.0; n + 1])
            .expect("rates copied from a valid generator")
    }

    /// Strongly connected components of the rate graph (Tarjan, iterative).
    /// Components are returned in reverse topological order.
    pub fn communicating_classes(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut index = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut comps = Vec::new();
        let mut next = 0usize;
        let mut call: Vec<(usize, usize)> = Vec::new();
        for root in 0..n {
            if index[root] != usize::MAX {
                continue;
            }
            call.push((root, self.row_ptr[root]));
            index[root] = next;
            low[root] = next;
            next += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut edge)) = call.last_mut() {
                if *edge < self.row_ptr[v + 1] {
                    let w = self.cols[*edge];
                    *edge += 1;
                    if index[w] == usize::MAX {
                        index[w] = next;
                        low[w] = next;
                        next += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, self.row_ptr[w]));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().expect("tarjan stack");
                            on_stack[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        comp.sort_unstable();
                        comps.push(comp);
                    }
                }
            }
        }
        comps
    }

    pub fn is_irreducible(&self) -> bool {
        self.communicating_classes().len() == 1
    }

    /// Dense copy of the full generator, diagonal included. Intended for
    /// small-state checks.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag(i);
            for (j, q) in self.row(i) {
                m[(i, j)] = q;
            }
        }
        m
    }
}
