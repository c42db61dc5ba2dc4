//! Counting processes with covariate-driven intensity.
//!
//! Two intensity families are supported:
//!
//! * superposition: `lambda = g + sum_j alpha_j exp(beta_j x_j)`, parameter layout
//!   `[g, alpha_1..alpha_a, beta_1..beta_a]`;
//! * linear: `lambda = sum_j alpha_j x_j`, layout `[alpha_1..alpha_a]`.
//!
//! Because covariates are piecewise constant, the intensity is piecewise constant
//! too, which makes both simulation and likelihood evaluation exact.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use serde::{Deserialize, Serialize};

use crate::covariate::{CovariatePath, MarkovCovariateSpec};
use crate::error::{Error, Result};

/// Parameter box of the superposition model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionBounds {
    pub g_max: f64,
    pub alpha_max: f64,
    /// `-L_beta`.
    pub beta_min: f64,
    pub beta_max: f64,
}

/// An intensity family together with its parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelFamily {
    Superposition {
        channels: usize,
        bounds: SuperpositionBounds,
    },
    Linear {
        channels: usize,
        alpha_max: f64,
    },
}

impl ModelFamily {
    pub fn superposition(channels: usize, bounds: SuperpositionBounds) -> Result<Self> {
        let f = ModelFamily::Superposition { channels, bounds };
        f.validate()?;
        Ok(f)
    }

    pub fn linear(channels: usize, alpha_max: f64) -> Result<Self> {
        let f = ModelFamily::Linear { channels, alpha_max };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelFamily::Superposition { channels, bounds } => {
                if channels == 0 {
                    return Err(Error::Parameter("need at least one channel".into()));
                }
                if !(bounds.g_max > 0.0 && bounds.alpha_max > 0.0) {
                    return Err(Error::Parameter("need M_g > 0 and M_alpha > 0".into()));
                }
                if !(bounds.beta_min <= 0.0 && bounds.beta_max >= 0.0 && bounds.beta_max > bounds.beta_min) {
                    return Err(Error::Parameter(
                        "need L_beta, M_beta >= 0 with L_beta + M_beta > 0".into(),
                    ));
                }
            }
            ModelFamily::Linear { channels, alpha_max } => {
                if channels == 0 {
                    return Err(Error::Parameter("need at least one channel".into()));
                }
                if !(alpha_max > 0.0) {
                    return Err(Error::Parameter("need M_alpha > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        match *self {
            ModelFamily::Superposition { channels, .. } | ModelFamily::Linear { channels, .. } => channels,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ModelFamily::Superposition { channels, .. } => 1 + 2 * channels,
            ModelFamily::Linear { channels, .. } => channels,
        }
    }

    /// Coordinates carrying a Bridge penalty: `g` and the `alpha`s.
    pub fn penalized_indices(&self) -> Vec<usize> {
        match *self {
            ModelFamily::Superposition { channels, .. } => (0..=channels).collect(),
            ModelFamily::Linear { channels, .. } => (0..channels).collect(),
        }
    }

    /// Index of `alpha_j`.
    pub fn alpha_index(&self, j: usize) -> usize {
        match self {
            ModelFamily::Superposition { .. } => 1 + j,
            ModelFamily::Linear { .. } => j,
        }
    }

    /// Index of `beta_j` (superposition only).
    pub fn beta_index(&self, j: usize) -> Option<usize> {
        match *self {
            ModelFamily::Superposition { channels, .. } => Some(1 + channels + j),
            ModelFamily::Linear { .. } => None,
        }
    }

    /// The nuisance coordinate that only matters when penalized coordinate
    /// `index` is nonzero (`beta_j` for `alpha_j`).
    pub fn nuisance_of(&self, index: usize) -> Option<usize> {
        match *self {
            ModelFamily::Superposition { channels, .. } if (1..=channels).contains(&index) => {
                Some(index + channels)
            }
            _ => None,
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        match *self {
            ModelFamily::Superposition { channels, bounds } => {
                let mut v = vec![0.0; 1 + channels];
                v.extend(std::iter::repeat_n(bounds.beta_min, channels));
                v
            }
            ModelFamily::Linear { channels, .. } => vec![0.0; channels],
        }
    }

    pub fn upper(&self) -> Vec<f64> {
        match *self {
            ModelFamily::Superposition { channels, bounds } => {
                let mut v = vec![bounds.g_max];
                v.extend(std::iter::repeat_n(bounds.alpha_max, channels));
                v.extend(std::iter::repeat_n(bounds.beta_max, channels));
                v
            }
            ModelFamily::Linear { channels, alpha_max } => vec![alpha_max; channels],
        }
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Input(format!(
                "parameter has length {}, model needs {}",
                theta.len(),
                self.dim()
            )));
        }
        let (lo, hi) = (self.lower(), self.upper());
        for (k, &v) in theta.iter().enumerate() {
            if !(v >= lo[k] && v <= hi[k]) {
                return Err(Error::Input(format!(
                    "coordinate {k} = {v} outside box [{}, {}]",
                    lo[k], hi[k]
                )));
            }
        }
        Ok(())
    }

    /// `lambda(theta; x)`.
    pub fn intensity(&self, theta: &[f64], x: &[f64]) -> f64 {
        match *self {
            ModelFamily::Superposition { channels, .. } => {
                let mut v = theta[0];
                for j in 0..channels {
                    let alpha = theta[1 + j];
                    if alpha != 0.0 {
                        v += alpha * (theta[1 + channels + j] * x[j]).exp();
                    }
                }
                v
            }
            ModelFamily::Linear { channels, .. } => (0..channels).map(|j| theta[j] * x[j]).sum(),
        }
    }

    /// Writes `d lambda / d theta` at `x` into `out`.
    pub fn intensity_gradient(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        match *self {
            ModelFamily::Superposition { channels, .. } => {
                out[0] = 1.0;
                for j in 0..channels {
                    let e = (theta[1 + channels + j] * x[j]).exp();
                    out[1 + j] = e;
                    out[1 + channels + j] = theta[1 + j] * x[j] * e;
                }
            }
            ModelFamily::Linear { channels, .. } => out[..channels].copy_from_slice(&x[..channels]),
        }
    }
}

/// A model family at a fixed parameter value.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    pub family: ModelFamily,
    pub theta: Vec<f64>,
}

impl IntensityModel {
    pub fn new(family: ModelFamily, theta: Vec<f64>) -> Result<Self> {
        family.validate()?;
        family.check_theta(&theta)?;
        Ok(Self { family, theta })
    }

    pub fn intensity_at(&self, x: &[f64]) -> f64 {
        self.family.intensity(&self.theta, x)
    }

    /// Exact sample of event times, drawing exponential gaps at each segment's rate.
    pub fn simulate_events(&self, spec: &MarkovCovariateSpec, path: &CovariatePath, seed: u64) -> EventPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.simulate_events_with_rng(spec, path, &mut rng)
    }

    pub fn simulate_events_with_rng<R: Rng + ?Sized>(
        &self,
        spec: &MarkovCovariateSpec,
        path: &CovariatePath,
        rng: &mut R,
    ) -> EventPath {
        let rates: Vec<f64> = spec.states().iter().map(|x| self.intensity_at(x)).collect();
        let mut times = Vec::new();
        for (start, end, s) in path.segments() {
            let rate = rates[s];
            if rate <= 0.0 {
                continue;
            }
            let mut t = start;
            loop {
                let e: f64 = Exp1.sample(rng);
                t += e / rate;
                if t >= end {
                    break;
                }
                // t > start holds except for underflow at astronomically large rates
                if t > times.last().copied().unwrap_or(0.0) {
                    times.push(t);
                }
            }
        }
        EventPath {
            horizon: path.horizon(),
            times,
        }
    }

    /// Exact `int_0^T lambda_t dt`.
    pub fn integrated_intensity(&self, spec: &MarkovCovariateSpec, path: &CovariatePath) -> f64 {
        path.segments()
            .map(|(a, b, s)| (b - a) * self.intensity_at(spec.state(s)))
            .sum()
    }

    /// `sum_i log lambda(t_i-) - int_0^T lambda dt`, or `-inf` when the
    /// intensity vanishes at an event.
    pub fn log_likelihood(&self, spec: &MarkovCovariateSpec, path: &CovariatePath, events: &EventPath) -> f64 {
        let starts = path.starts();
        let states = path.state_indices();
        let mut seg = 0;
        let mut log_sum = 0.0;
        for &t in events.times() {
            // predictable version: an event at a jump time sees the pre-jump state
            while seg + 1 < starts.len() && starts[seg + 1] < t {
                seg += 1;
            }
            let lambda = self.intensity_at(spec.state(states[seg]));
            if lambda <= 0.0 {
                return f64::NEG_INFINITY;
            }
            log_sum += lambda.ln();
        }
        log_sum - self.integrated_intensity(spec, path)
    }
}

/// Ordered event times in `(0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPath {
    horizon: f64,
    times: Vec<f64>,
}

impl EventPath {
    pub fn new(horizon: f64, times: Vec<f64>) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Input("horizon must be positive".into()));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input("event times must be strictly increasing".into()));
        }
        if times.first().is_some_and(|&t| !(t > 0.0)) || times.last().is_some_and(|&t| t > horizon) {
            return Err(Error::Input("event times must lie in (0, T]".into()));
        }
        Ok(Self { horizon, times })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn count(&self) -> usize {
        self.times.len()
    }

    pub fn write_csv<W: Write>(&self, comments: &[String], mut out: W) -> std::io::Result<()> {
        for c in comments {
            writeln!(out, "# {c}")?;
        }
        writeln!(out, "# horizon={}", self.horizon)?;
        writeln!(out, "time")?;
        for t in &self.times {
            writeln!(out, "{t}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut horizon = None;
        let mut times = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Input(format!("read error: {e}")))?;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("horizon=") {
                    horizon = Some(
                        v.parse::<f64>()
                            .map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))?,
                    );
                }
                continue;
            }
            if line.is_empty() || line == "time" {
                continue;
            }
            times.push(
                line.parse::<f64>()
                    .map_err(|e| Error::Input(format!("line {}: {e}", lineno + 1)))?,
            );
        }
        let horizon = horizon.ok_or_else(|| Error::Input("missing '# horizon=' header".into()))?;
        Self::new(horizon, times)
    }
}

/// Per-state occupation times and event counts; the likelihood of any
/// parameter depends on the data only through these.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub horizon: f64,
    pub states: Vec<Vec<f64>>,
    pub occupation: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Dataset {
    pub fn new(spec: &MarkovCovariateSpec, path: &CovariatePath, events: &EventPath) -> Result<Self> {
        if (path.horizon() - events.horizon()).abs() > 1e-12 * path.horizon() {
            return Err(Error::Input("covariate and event horizons differ".into()));
        }
        let starts = path.starts();
        let states = path.state_indices();
        let mut counts = vec![0u64; spec.n_states()];
        let mut seg = 0;
        for &t in events.times() {
            while seg + 1 < starts.len() && starts[seg + 1] < t {
                seg += 1;
            }
            counts[states[seg]] += 1;
        }
        Ok(Self {
            horizon: path.horizon(),
            states: spec.states().to_vec(),
            occupation: path.occupation_times(spec.n_states()),
            counts,
        })
    }

    /// Draws the per-state counts directly: given the path, the count in state
    /// `s` is Poisson with mean `lambda(x_s)` times the occupation time, which
    /// is the law of binned exact event times without generating them.
    pub fn sample_counts<R: Rng + ?Sized>(
        model: &IntensityModel,
        spec: &MarkovCovariateSpec,
        path: &CovariatePath,
        rng: &mut R,
    ) -> Result<Self> {
        let occupation = path.occupation_times(spec.n_states());
        let counts = spec
            .states()
            .iter()
            .zip(&occupation)
            .map(|(x, &occ)| {
                let mean = model.intensity_at(x) * occ;
                if mean <= 0.0 {
                    return Ok(0);
                }
                let draw: f64 = Poisson::new(mean)
                    .map_err(|e| Error::Numerical(format!("Poisson mean {mean}: {e}")))?
                    .sample(rng);
                Ok(draw as u64)
            })
            .collect::<Result<Vec<u64>>>()?;
        Ok(Self {
            horizon: path.horizon(),
            states: spec.states().to_vec(),
            occupation,
            counts,
        })
    }

    pub fn total_events(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Log-likelihood from the sufficient statistics.
    pub fn log_likelihood(&self, family: &ModelFamily, theta: &[f64]) -> f64 {
        let mut value = 0.0;
        for ((x, &occ), &n) in self.states.iter().zip(&self.occupation).zip(&self.counts) {
            let lambda = family.intensity(theta, x);
            if n > 0 {
                if lambda <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                value += n as f64 * lambda.ln();
            }
            value -= occ * lambda;
        }
        value
    }

    /// Log-likelihood and its gradient, both multiplied by `scale`.
    pub fn log_likelihood_grad(&self, family: &ModelFamily, theta: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut dl = vec![0.0; theta.len()];
        let mut value = 0.0;
        for ((x, &occ), &n) in self.states.iter().zip(&self.occupation).zip(&self.counts) {
            if occ == 0.0 && n == 0 {
                continue;
            }
            let lambda = family.intensity(theta, x);
            let mut w = -occ;
            if n > 0 {
                if lambda <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                value += n as f64 * lambda.ln();
                w += n as f64 / lambda;
            }
            value -= occ * lambda;
            family.intensity_gradient(theta, x, &mut dl);
            for (g, d) in grad.iter_mut().zip(&dl) {
                *g += scale * w * d;
            }
        }
        scale * value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn bounds() -> SuperpositionBounds {
        SuperpositionBounds { g_max: 10.0, alpha_max: 10.0, beta_min: -2.0, beta_max: 2.0 }
    }

    fn chain() -> MarkovCovariateSpec {
        MarkovCovariateSpec::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![2.0, 0.0]],
            DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.5, 1.0, -2.0, 1.0, 0.3, 0.7, -1.0]),
        )
        .unwrap()
    }

    #[test]
    fn intensity_examples() {
        let sup = ModelFamily::superposition(1, bounds()).unwrap();
        assert_eq!(sup.intensity(&[1.5, 0.0, 1.0], &[3.0]), 1.5);
        assert_eq!(sup.intensity(&[1.0, 1.0, 0.0], &[7.0]), 2.0);
        let lin = ModelFamily::linear(2, 5.0).unwrap();
        assert_eq!(lin.intensity(&[2.0, 3.0], &[1.0, 2.0]), 8.0);
    }

    #[test]
    fn layout_helpers() {
        let sup = ModelFamily::superposition(2, bounds()).unwrap();
        assert_eq!(sup.dim(), 5);
        assert_eq!(sup.penalized_indices(), vec![0, 1, 2]);
        assert_eq!(sup.nuisance_of(2), Some(4));
        assert_eq!(sup.nuisance_of(0), None);
        assert_eq!(sup.lower(), vec![0.0, 0.0, 0.0, -2.0, -2.0]);
        assert!(sup.check_theta(&[1.0, 0.0, 0.0, 3.0, 0.0]).is_err());
        assert!(ModelFamily::superposition(1, SuperpositionBounds { beta_min: 0.0, beta_max: 0.0, ..bounds() }).is_err());
    }

    #[test]
    fn zero_intensity_gives_no_events() {
        let spec = chain();
        let path = spec.simulate(100.0, 1).unwrap();
        let m = IntensityModel::new(ModelFamily::linear(2, 1.0).unwrap(), vec![0.0, 0.0]).unwrap();
        assert_eq!(m.simulate_events(&spec, &path, 2).count(), 0);
    }

    #[test]
    fn integrated_intensity_examples() {
        let spec = chain();
        let path = spec.simulate(37.0, 1).unwrap();
        let sup = ModelFamily::superposition(2, bounds()).unwrap();
        let m = IntensityModel::new(sup.clone(), vec![2.5, 0.0, 0.0, 0.3, 0.1]).unwrap();
        assert_relative_eq!(m.integrated_intensity(&spec, &path), 2.5 * 37.0, epsilon = 1e-10);
        let zero = IntensityModel::new(sup, vec![0.0; 5]).unwrap();
        assert_eq!(zero.integrated_intensity(&spec, &path), 0.0);

        let lin = IntensityModel::new(ModelFamily::linear(2, 5.0).unwrap(), vec![0.7, 1.3]).unwrap();
        let avg = path.ergodic_average(&spec, |x| x.to_vec());
        assert_relative_eq!(
            lin.integrated_intensity(&spec, &path),
            37.0 * (0.7 * avg[0] + 1.3 * avg[1]),
            epsilon = 1e-10
        );
    }

    #[test]
    fn homogeneous_poisson_likelihood() {
        let spec = chain();
        let path = spec.simulate(20.0, 1).unwrap();
        let sup = ModelFamily::superposition(2, bounds()).unwrap();
        let m = IntensityModel::new(sup, vec![1.7, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let ev = m.simulate_events(&spec, &path, 5);
        let n = ev.count() as f64;
        assert_relative_eq!(m.log_likelihood(&spec, &path, &ev), n * 1.7f64.ln() - 1.7 * 20.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_intensity_at_event_is_negative_infinity() {
        let spec = chain();
        let path = spec.simulate(20.0, 1).unwrap();
        let lin = ModelFamily::linear(2, 5.0).unwrap();
        let ev = IntensityModel::new(lin.clone(), vec![1.0, 1.0]).unwrap().simulate_events(&spec, &path, 3);
        assert!(ev.count() > 0);
        let zero = IntensityModel::new(lin, vec![0.0, 0.0]).unwrap();
        assert_eq!(zero.log_likelihood(&spec, &path, &ev), f64::NEG_INFINITY);
    }

    #[test]
    fn sufficient_statistics_agree_with_path_walk() {
        let spec = chain();
        let path = spec.simulate(200.0, 8).unwrap();
        let sup = ModelFamily::superposition(2, bounds()).unwrap();
        let truth = IntensityModel::new(sup.clone(), vec![0.5, 1.0, 0.2, 0.8, -0.5]).unwrap();
        let ev = truth.simulate_events(&spec, &path, 9);
        let data = Dataset::new(&spec, &path, &ev).unwrap();
        assert_eq!(data.total_events() as usize, ev.count());
        for theta in [vec![0.5, 1.0, 0.2, 0.8, -0.5], vec![1.0, 0.3, 0.0, 0.0, 1.2]] {
            let m = IntensityModel::new(sup.clone(), theta.clone()).unwrap();
            assert_relative_eq!(
                m.log_likelihood(&spec, &path, &ev),
                data.log_likelihood(&sup, &theta),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn sampled_counts_match_binned_events() {
        let spec = chain();
        let path = spec.simulate(50.0, 4).unwrap();
        let sup = ModelFamily::superposition(2, bounds()).unwrap();
        let model = IntensityModel::new(sup, vec![0.5, 1.0, 0.2, 0.8, -0.5]).unwrap();
        let occ = path.occupation_times(3);
        let reps = 4000;
        let (mut binned, mut sampled) = (vec![0.0; 3], vec![0.0; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..reps {
            let ev = model.simulate_events_with_rng(&spec, &path, &mut rng);
            let a = Dataset::new(&spec, &path, &ev).unwrap();
            let b = Dataset::sample_counts(&model, &spec, &path, &mut rng).unwrap();
            assert_eq!(a.occupation, b.occupation);
            for s in 0..3 {
                binned[s] += a.counts[s] as f64 / reps as f64;
                sampled[s] += b.counts[s] as f64 / reps as f64;
            }
        }
        for s in 0..3 {
            let mean = model.intensity_at(spec.state(s)) * occ[s];
            let se = (mean / reps as f64).sqrt();
            assert!((binned[s] - mean).abs() < 4.0 * se, "state {s}: {} vs {mean}", binned[s]);
            assert!((sampled[s] - mean).abs() < 4.0 * se, "state {s}: {} vs {mean}", sampled[s]);
        }
    }

    #[test]
    fn event_at_jump_time_uses_pre_jump_state() {
        let spec = MarkovCovariateSpec::new(
            vec![vec![1.0], vec![3.0]],
            DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]),
        )
        .unwrap();
        let path = CovariatePath::new(2.0, vec![0.0, 1.0], vec![0, 1]).unwrap();
        let ev = EventPath::new(2.0, vec![1.0]).unwrap();
        let m = IntensityModel::new(ModelFamily::linear(1, 5.0).unwrap(), vec![1.0]).unwrap();
        // lambda(1-) = 1, integral = 1 + 3
        assert_relative_eq!(m.log_likelihood(&spec, &path, &ev), -4.0, epsilon = 1e-15);
        assert_eq!(Dataset::new(&spec, &path, &ev).unwrap().counts, vec![1, 0]);
    }

    #[test]
    fn event_path_validation_and_csv() {
        assert!(EventPath::new(1.0, vec![0.5, 0.5]).is_err());
        assert!(EventPath::new(1.0, vec![0.0]).is_err());
        assert!(EventPath::new(1.0, vec![1.5]).is_err());
        let ev = EventPath::new(3.0, vec![0.1, 1.0 / 3.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        ev.write_csv(&["x".into()], &mut buf).unwrap();
        assert_eq!(EventPath::read_csv(buf.as_slice()).unwrap(), ev);
        assert!(EventPath::read_csv("time\n0.5\n".as_bytes()).is_err());
    }

    #[test]
    fn appending_quiet_time_lowers_likelihood() {
        let spec = MarkovCovariateSpec::new(vec![vec![1.0]], DMatrix::zeros(1, 1)).unwrap();
        let m = IntensityModel::new(ModelFamily::linear(1, 5.0).unwrap(), vec![2.0]).unwrap();
        let p1 = CovariatePath::new(4.0, vec![0.0], vec![0]).unwrap();
        let p2 = CovariatePath::new(5.5, vec![0.0], vec![0]).unwrap();
        let e1 = EventPath::new(4.0, vec![1.0, 2.0]).unwrap();
        let e2 = EventPath::new(5.5, vec![1.0, 2.0]).unwrap();
        let drop = m.log_likelihood(&spec, &p1, &e1) - m.log_likelihood(&spec, &p2, &e2);
        assert_relative_eq!(drop, 2.0 * 1.5, epsilon = 1e-12);
    }
}
