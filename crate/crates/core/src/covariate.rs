//! Finite-state Markov jump covariates.
//!
//! A covariate process `X_t` takes values in a finite set of state vectors and
//! evolves as a continuous-time Markov chain. Its invariant law is a finite
//! mixture of point masses, so every `nu`-integral is an exact weighted sum.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GENERATOR_TOL: f64 = 1e-9;
const COLLINEAR_TOL: f64 = 1e-12;

/// Exact linear dependence `x_i = sum_{j in D} b_ij x_j` for `i` outside `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collinearity {
    /// Independent channels, strictly increasing, 0-based.
    pub d: Vec<usize>,
    /// One row per dependent channel (ascending order), one column per entry of `d`.
    pub b: Vec<Vec<f64>>,
}

/// A finite-state covariate chain: state values, generator, optional collinearity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCovariateSpec", into = "RawCovariateSpec")]
pub struct MarkovCovariateSpec {
    states: Vec<Vec<f64>>,
    generator: DMatrix<f64>,
    collinearity: Option<Collinearity>,
    stationary: Vec<f64>,
    // per state: (exit rate, cumulative jump probabilities over targets, targets)
    jumps: Vec<(f64, Vec<f64>, Vec<usize>)>,
}

#[derive(Serialize, Deserialize)]
struct RawCovariateSpec {
    states: Vec<Vec<f64>>,
    generator: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    collinearity: Option<Collinearity>,
}

impl TryFrom<RawCovariateSpec> for MarkovCovariateSpec {
    type Error = Error;
    fn try_from(raw: RawCovariateSpec) -> Result<Self> {
        let n = raw.generator.len();
        if raw.generator.iter().any(|row| row.len() != n) {
            return Err(Error::Construction("generator must be square".into()));
        }
        let q = DMatrix::from_fn(n, n, |i, j| raw.generator[i][j]);
        let spec = MarkovCovariateSpec::new(raw.states, q)?;
        match raw.collinearity {
            Some(c) => spec.with_collinearity(c),
            None => Ok(spec),
        }
    }
}

impl From<MarkovCovariateSpec> for RawCovariateSpec {
    fn from(spec: MarkovCovariateSpec) -> Self {
        let n = spec.generator.nrows();
        RawCovariateSpec {
            generator: (0..n)
                .map(|i| (0..n).map(|j| spec.generator[(i, j)]).collect())
                .collect(),
            states: spec.states,
            collinearity: spec.collinearity,
        }
    }
}

/// Solves `pi Q = 0`, `sum pi = 1` for an irreducible generator.
pub fn stationary_distribution(generator: &DMatrix<f64>) -> Result<Vec<f64>> {
    validate_generator(generator)?;
    let n = generator.nrows();
    if !is_irreducible(generator) {
        return Err(Error::Construction("generator is reducible".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Q^T pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut m = generator.transpose();
    let mut rhs = DVector::zeros(n);
    for j in 0..n {
        m[(n - 1, j)] = 1.0;
    }
    rhs[n - 1] = 1.0;
    let pi = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("stationary system".into()))?;
    if pi.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Construction(
            "stationary distribution is not strictly positive".into(),
        ));
    }
    let total: f64 = pi.iter().sum();
    Ok(pi.iter().map(|p| p / total).collect())
}

fn validate_generator(q: &DMatrix<f64>) -> Result<()> {
    let n = q.nrows();
    if n == 0 || q.ncols() != n {
        return Err(Error::Construction("generator must be a nonempty square matrix".into()));
    }
    for i in 0..n {
        let mut sum = 0.0;
        let mut scale: f64 = 0.0;
        for j in 0..n {
            let v = q[(i, j)];
            if !v.is_finite() {
                return Err(Error::Construction(format!("generator entry ({i},{j}) not finite")));
            }
            if i != j && v < 0.0 {
                return Err(Error::Construction(format!(
                    "negative off-diagonal rate at ({i},{j})"
                )));
            }
            sum += v;
            scale = scale.max(v.abs());
        }
        if sum.abs() > GENERATOR_TOL * scale.max(1.0) {
            return Err(Error::Construction(format!("generator row {i} sums to {sum}")));
        }
    }
    Ok(())
}

fn is_irreducible(q: &DMatrix<f64>) -> bool {
    let n = q.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let rate = if forward { q[(i, j)] } else { q[(j, i)] };
                if i != j && rate > 0.0 && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

impl MarkovCovariateSpec {
    pub fn new(states: Vec<Vec<f64>>, generator: DMatrix<f64>) -> Result<Self> {
        if states.len() != generator.nrows() {
            return Err(Error::Construction(format!(
                "{} states but generator is {}x{}",
                states.len(),
                generator.nrows(),
                generator.ncols()
            )));
        }
        let dim = states.first().map_or(0, Vec::len);
        if dim == 0 || states.iter().any(|s| s.len() != dim) {
            return Err(Error::Construction("state vectors must share a positive dimension".into()));
        }
        if states.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Construction("state values must be finite".into()));
        }
        let stationary = stationary_distribution(&generator)?;
        let n = states.len();
        let jumps = (0..n)
            .map(|i| {
                let rate = -generator[(i, i)];
                let mut targets = Vec::new();
                let mut cumulative = Vec::new();
                let mut acc = 0.0;
                for j in (0..n).filter(|&j| j != i && generator[(i, j)] > 0.0) {
                    acc += generator[(i, j)];
                    targets.push(j);
                    cumulative.push(acc / rate);
                }
                (rate, cumulative, targets)
            })
            .collect();
        Ok(Self {
            states,
            generator,
            collinearity: None,
            stationary,
            jumps,
        })
    }

    /// Attach a collinearity structure, verifying it holds in every state.
    pub fn with_collinearity(mut self, c: Collinearity) -> Result<Self> {
        let a = self.dim();
        validate_collinearity(&c, a)?;
        let dc = complement(&c.d, a);
        for (s, x) in self.states.iter().enumerate() {
            for (row, &i) in c.b.iter().zip(&dc) {
                let implied: f64 = row.iter().zip(&c.d).map(|(b, &j)| b * x[j]).sum();
                if (x[i] - implied).abs() > COLLINEAR_TOL * (1.0 + x[i].abs()) {
                    return Err(Error::Construction(format!(
                        "state {s}: channel {i} = {} but collinearity implies {implied}",
                        x[i]
                    )));
                }
            }
        }
        self.collinearity = Some(c);
        Ok(self)
    }

    /// Builds a chain whose dependent channels are exact linear combinations of
    /// the independent ones. `base_states` hold the values of the channels in
    /// `c.d` only.
    pub fn collinear(
        base_states: Vec<Vec<f64>>,
        generator: DMatrix<f64>,
        dim: usize,
        c: Collinearity,
    ) -> Result<Self> {
        validate_collinearity(&c, dim)?;
        if base_states.iter().any(|s| s.len() != c.d.len()) {
            return Err(Error::Construction("base states must have one value per channel in D".into()));
        }
        let dc = complement(&c.d, dim);
        let states = base_states
            .iter()
            .map(|base| {
                let mut x = vec![0.0; dim];
                for (&j, &v) in c.d.iter().zip(base) {
                    x[j] = v;
                }
                for (row, &i) in c.b.iter().zip(&dc) {
                    x[i] = row.iter().zip(base).map(|(b, v)| b * v).sum();
                }
                x
            })
            .collect();
        Self::new(states, generator)?.with_collinearity(c)
    }

    /// Independent channels, each its own chain; the joint generator is the
    /// Kronecker sum of the channel generators.
    pub fn product(channels: &[MarkovCovariateSpec]) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Construction("product of zero chains".into()));
        }
        let mut states: Vec<Vec<f64>> = vec![Vec::new()];
        let mut generator = DMatrix::<f64>::zeros(1, 1);
        for ch in channels {
            let m = ch.n_states();
            let n = states.len();
            let mut next_states = Vec::with_capacity(n * m);
            for s in &states {
                for t in &ch.states {
                    let mut x = s.clone();
                    x.extend_from_slice(t);
                    next_states.push(x);
                }
            }
            let mut g = DMatrix::zeros(n * m, n * m);
            for i in 0..n {
                for k in 0..m {
                    for j in 0..n {
                        g[(i * m + k, j * m + k)] += generator[(i, j)];
                    }
                    for l in 0..m {
                        g[(i * m + k, i * m + l)] += ch.generator[(k, l)];
                    }
                }
            }
            states = next_states;
            generator = g;
        }
        Self::new(states, generator)
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, s: usize) -> &[f64] {
        &self.states[s]
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn collinearity(&self) -> Option<&Collinearity> {
        self.collinearity.as_ref()
    }

    /// Index of the state whose value vector equals `x` exactly.
    pub fn find_state(&self, x: &[f64]) -> Option<usize> {
        self.states.iter().position(|s| s.as_slice() == x)
    }

    /// Exact `int f dnu = sum_s pi_s f(x_s)`.
    pub fn nu_integral<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mut acc: Vec<f64> = Vec::new();
        for (x, &p) in self.states.iter().zip(&self.stationary) {
            let v = f(x);
            if acc.is_empty() {
                acc = vec![0.0; v.len()];
            }
            for (a, vi) in acc.iter_mut().zip(v) {
                *a += p * vi;
            }
        }
        acc
    }

    /// The `a x r` matrix `A` with `A (X^j)_{j in D}' = X'`; identity without collinearity.
    pub fn collinearity_matrix(&self) -> Result<DMatrix<f64>> {
        let a = self.dim();
        match &self.collinearity {
            None => Ok(DMatrix::identity(a, a)),
            Some(c) => {
                let r = c.d.len();
                let dc = complement(&c.d, a);
                let mut m = DMatrix::zeros(a, r);
                for (col, &j) in c.d.iter().enumerate() {
                    m[(j, col)] = 1.0;
                }
                for (row, &i) in c.b.iter().zip(&dc) {
                    for (col, &b) in row.iter().enumerate() {
                        m[(i, col)] = b;
                    }
                }
                let rank = m.clone().svd(false, false).rank(1e-9 * m.norm().max(1.0));
                if rank != r {
                    return Err(Error::Rank { expected: r, found: rank });
                }
                Ok(m)
            }
        }
    }

    /// Exact simulation on `[0, horizon]`, started from the stationary law.
    pub fn simulate(&self, horizon: f64, seed: u64) -> Result<CovariatePath> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.simulate_with_rng(horizon, &mut rng)
    }

    pub fn simulate_with_rng<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Result<CovariatePath> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
        }
        let mut state = sample_index(&self.stationary, rng.random::<f64>());
        let mut starts = vec![0.0];
        let mut states = vec![state];
        let mut t = 0.0;
        loop {
            let (rate, cumulative, targets) = &self.jumps[state];
            if *rate <= 0.0 {
                break;
            }
            let e: f64 = Exp1.sample(rng);
            t += e / rate;
            if t >= horizon {
                break;
            }
            state = targets[sample_index_cumulative(cumulative, rng.random::<f64>())];
            starts.push(t);
            states.push(state);
        }
        Ok(CovariatePath { horizon, starts, states })
    }
}

fn validate_collinearity(c: &Collinearity, a: usize) -> Result<()> {
    if c.d.is_empty() || c.d.windows(2).any(|w| w[0] >= w[1]) || c.d.iter().any(|&j| j >= a) {
        return Err(Error::Construction(
            "collinearity index set D must be nonempty, strictly increasing and within range".into(),
        ));
    }
    let dc = a - c.d.len();
    if c.b.len() != dc || c.b.iter().any(|row| row.len() != c.d.len()) {
        return Err(Error::Construction(format!(
            "coefficient matrix B must be {dc}x{}",
            c.d.len()
        )));
    }
    if c.b.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Construction("collinearity coefficients must be finite".into()));
    }
    Ok(())
}

pub(crate) fn complement(d: &[usize], a: usize) -> Vec<usize> {
    (0..a).filter(|j| !d.contains(j)).collect()
}

fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn sample_index_cumulative(cumulative: &[f64], u: f64) -> usize {
    cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(cumulative.len() - 1)
}

/// Piecewise-constant, right-continuous sample path of the covariate chain.
///
/// Segment `k` covers `[starts[k], starts[k+1])`, the last one ends at the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariatePath {
    horizon: f64,
    starts: Vec<f64>,
    states: Vec<usize>,
}

impl CovariatePath {
    pub fn new(horizon: f64, starts: Vec<f64>, states: Vec<usize>) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Input("horizon must be positive".into()));
        }
        if starts.is_empty() || starts.len() != states.len() || starts[0] != 0.0 {
            return Err(Error::Input("path must start at 0 with one state per segment".into()));
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) || *starts.last().unwrap() >= horizon {
            return Err(Error::Input("segment starts must increase within [0, T)".into()));
        }
        Ok(Self { horizon, starts, states })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Segment start times; the first is 0, later ones are the jump times.
    pub fn starts(&self) -> &[f64] {
        &self.starts
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.starts[1..]
    }

    pub fn state_indices(&self) -> &[usize] {
        &self.states
    }

    pub fn n_segments(&self) -> usize {
        self.starts.len()
    }

    /// `(start, end, state)` triples.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, usize)> + '_ {
        (0..self.starts.len()).map(move |k| {
            let end = self.starts.get(k + 1).copied().unwrap_or(self.horizon);
            (self.starts[k], end, self.states[k])
        })
    }

    /// Total time spent in each state.
    pub fn occupation_times(&self, n_states: usize) -> Vec<f64> {
        let mut occ = vec![0.0; n_states];
        for (a, b, s) in self.segments() {
            occ[s] += b - a;
        }
        occ
    }

    /// Exact `(1/T) int_0^T f(X_t) dt`.
    pub fn ergodic_average<F>(&self, spec: &MarkovCovariateSpec, f: F) -> Vec<f64>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mut acc: Vec<f64> = Vec::new();
        for (a, b, s) in self.segments() {
            let v = f(spec.state(s));
            if acc.is_empty() {
                acc = vec![0.0; v.len()];
            }
            let w = (b - a) / self.horizon;
            for (x, vi) in acc.iter_mut().zip(v) {
                *x += w * vi;
            }
        }
        acc
    }

    /// Writes `t_start,t_end,x_1..x_a` rows after optional `#` comment lines.
    pub fn write_csv<W: Write>(
        &self,
        spec: &MarkovCovariateSpec,
        comments: &[String],
        mut out: W,
    ) -> std::io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        write!(out, "t_start,t_end")?;
        for j in 1..=spec.dim() {
            write!(out, ",x_{j}")?;
        }
        writeln!(out)?;
        for (a, b, s) in self.segments() {
            write!(out, "{a},{b}")?;
            for v in spec.state(s) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Reads a path written by [`Self::write_csv`], mapping value rows back to states.
    pub fn read_csv<R: BufRead>(spec: &MarkovCovariateSpec, input: R) -> Result<Self> {
        let mut starts = Vec::new();
        let mut states = Vec::new();
        let mut horizon = 0.0;
        let mut header_seen = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Input(format!("read error: {e}")))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                header_seen = true;
                if line.starts_with("t_start") {
                    continue;
                }
            }
            let fields = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))?;
            if fields.len() != 2 + spec.dim() {
                return Err(Error::Input(format!(
                    "line {}: expected {} columns, got {}",
                    lineno + 1,
                    2 + spec.dim(),
                    fields.len()
                )));
            }
            let s = spec.find_state(&fields[2..]).ok_or_else(|| {
                Error::Input(format!("line {}: values match no configured state", lineno + 1))
            })?;
            starts.push(fields[0]);
            states.push(s);
            horizon = fields[1];
        }
        Self::new(horizon, starts, states)
    }
}
