//! Penalized quasi-maximum likelihood over a parameter box.
//!
//! The Bridge penalty `|theta_j|^q` with `q < 1` is non-convex and not
//! differentiable at zero. The global maximizer is found by enumerating every
//! zero pattern of the penalized coordinates; on a fixed pattern the objective
//! is smooth, and it is maximized by multi-start projected BFGS.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{halton, minimize_box, QuasiNewtonConfig};
use crate::penalty::PenaltySpec;
use crate::pointprocess::{Dataset, ModelFamily};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Lower bound for free penalized coordinates during the smooth solve.
    pub activity_floor: f64,
    pub enumeration_cap: usize,
    /// Patterns whose objectives differ by less than this are tied; the
    /// sparser one wins.
    pub tie_tol: f64,
    /// Solve patterns on the rayon pool.
    pub parallel_patterns: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            starts: 8,
            max_iter: 500,
            grad_tol: 1e-8,
            activity_floor: 1e-8,
            enumeration_cap: 12,
            tie_tol: 1e-10,
            parallel_patterns: false,
        }
    }
}

/// Observed data, model family and penalty: everything the objective needs.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub family: &'a ModelFamily,
    pub data: &'a Dataset,
    pub penalty: &'a PenaltySpec,
}

impl<'a> Problem<'a> {
    pub fn new(family: &'a ModelFamily, data: &'a Dataset, penalty: &'a PenaltySpec) -> Result<Self> {
        family.validate()?;
        let zero_lower: Vec<usize> = family.penalized_indices();
        for e in penalty.entries() {
            if !zero_lower.contains(&e.index) {
                return Err(Error::Parameter(format!(
                    "coordinate {} cannot be penalized in this model",
                    e.index
                )));
            }
        }
        if data.states.first().map_or(0, Vec::len) < family.channels() {
            return Err(Error::Input("covariate dimension smaller than model channels".into()));
        }
        Ok(Self { family, data, penalty })
    }

    pub fn horizon(&self) -> f64 {
        self.data.horizon
    }

    /// `Psi_T(theta) = log-likelihood - penalty`, possibly `-inf`.
    pub fn objective(&self, theta: &[f64]) -> f64 {
        let ll = self.data.log_likelihood(self.family, theta);
        if ll == f64::NEG_INFINITY {
            return ll;
        }
        ll - self.penalty.penalty_total(theta, self.horizon())
    }
}

/// `Psi_T` at `theta`; see [`Problem::objective`].
pub fn penalized_objective(family: &ModelFamily, data: &Dataset, penalty: &PenaltySpec, theta: &[f64]) -> Result<f64> {
    let p = Problem::new(family, data, penalty)?;
    family.check_theta(theta)?;
    Ok(p.objective(theta))
}

/// Result of maximizing on one zero pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternFit {
    /// One flag per penalty entry (in index order): `true` = free (nonzero).
    pub free: Vec<bool>,
    pub theta: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub starts: usize,
}

impl PatternFit {
    pub fn active_count(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub patterns: usize,
    pub starts: usize,
    pub iterations: usize,
    pub unconverged_patterns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub theta: Vec<f64>,
    /// Penalized coordinates estimated nonzero.
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub patterns: Vec<PatternFit>,
    pub stats: SolverStats,
}

struct Layout {
    /// model coordinates optimized on this pattern
    vars: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn pattern_layout(problem: &Problem, free: &[bool], floor: f64) -> Layout {
    let family = problem.family;
    let (lo, hi) = (family.lower(), family.upper());
    let entries = problem.penalty.entries();
    let mut fixed_zero = vec![false; family.dim()];
    let mut floored = vec![false; family.dim()];
    for (e, &f) in entries.iter().zip(free) {
        if f {
            floored[e.index] = true;
        } else {
            fixed_zero[e.index] = true;
            if let Some(nu) = family.nuisance_of(e.index) {
                fixed_zero[nu] = true;
            }
        }
    }
    let mut layout = Layout { vars: Vec::new(), lower: Vec::new(), upper: Vec::new() };
    for k in 0..family.dim() {
        if fixed_zero[k] {
            continue;
        }
        layout.vars.push(k);
        layout.lower.push(if floored[k] { lo[k].max(floor).min(hi[k]) } else { lo[k] });
        layout.upper.push(hi[k]);
    }
    layout
}

fn data_driven_start(problem: &Problem, layout: &Layout) -> Vec<f64> {
    let family = problem.family;
    let data = problem.data;
    let rate = data.total_events() as f64 / data.horizon;
    let n_level = layout
        .vars
        .iter()
        .filter(|&&k| family.penalized_indices().contains(&k))
        .count()
        .max(1) as f64;
    layout
        .vars
        .iter()
        .zip(layout.lower.iter().zip(&layout.upper))
        .map(|(&k, (&l, &u))| {
            let guess = match family {
                ModelFamily::Superposition { channels, .. } => {
                    if k <= *channels {
                        rate / n_level
                    } else {
                        0.0
                    }
                }
                ModelFamily::Linear { .. } => {
                    let mean_x: f64 = data
                        .states
                        .iter()
                        .zip(&data.occupation)
                        .map(|(x, occ)| x[k] * occ)
                        .sum::<f64>()
                        / data.horizon;
                    if mean_x > 0.0 {
                        rate / (n_level * mean_x)
                    } else {
                        u
                    }
                }
            };
            guess.clamp(l, u)
        })
        .collect()
}

/// Maximizes `Psi_T` with the penalized coordinates constrained to the
/// given zero pattern (`free[i]` refers to the `i`-th penalty entry).
pub fn maximize_pattern(problem: &Problem, free: &[bool], cfg: &SolverConfig) -> Result<PatternFit> {
    let entries = problem.penalty.entries();
    if free.len() != entries.len() {
        return Err(Error::Input(format!(
            "pattern has {} flags, penalty has {} entries",
            free.len(),
            entries.len()
        )));
    }
    if cfg.starts == 0 {
        return Err(Error::Parameter("need at least one start".into()));
    }
    let family = problem.family;
    let layout = pattern_layout(problem, free, cfg.activity_floor);
    let dim = family.dim();
    let horizon = problem.horizon();
    let qn = QuasiNewtonConfig { max_iter: cfg.max_iter, grad_tol: cfg.grad_tol };

    let expand = |z: &[f64]| {
        let mut theta = vec![0.0; dim];
        for (&k, &v) in layout.vars.iter().zip(z) {
            theta[k] = v;
        }
        theta
    };
    // minimize -Psi_T / T over the pattern's free coordinates
    let scale = 1.0 / horizon;
    let objective = |z: &[f64], grad: &mut [f64]| -> f64 {
        let theta = expand(z);
        let mut full = vec![0.0; dim];
        let nll = problem.data.log_likelihood_grad(family, &theta, -scale, &mut full);
        if nll == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        let pen = problem.penalty.penalty_total(&theta, horizon) * scale;
        problem.penalty.add_gradient(&theta, horizon, scale, &mut full);
        for (g, &k) in grad.iter_mut().zip(&layout.vars) {
            *g = full[k];
        }
        nll + pen
    };

    let nvar = layout.vars.len();
    let mut starts = vec![data_driven_start(problem, &layout)];
    for s in 1..cfg.starts {
        let u = halton(s, nvar);
        starts.push(
            u.iter()
                .zip(layout.lower.iter().zip(&layout.upper))
                .map(|(t, (l, h))| l + t * (h - l))
                .collect(),
        );
    }

    let mut best: Option<crate::optim::Minimum> = None;
    let mut iterations = 0;
    for z0 in &starts {
        let m = minimize_box(objective, z0, &layout.lower, &layout.upper, &qn);
        iterations += m.iterations;
        let better = match &best {
            None => true,
            Some(b) => m.value < b.value,
        };
        if better {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least one start");
    if best.value.is_finite() && nvar > 0 {
        // polish from the best start with a fresh curvature estimate
        let m = minimize_box(objective, &best.x.clone(), &layout.lower, &layout.upper, &qn);
        iterations += m.iterations;
        if m.value <= best.value {
            best = m;
        }
    }
    let theta = expand(&best.x);
    let value = problem.objective(&theta);
    Ok(PatternFit {
        free: free.to_vec(),
        theta,
        value,
        iterations,
        converged: best.converged() || !best.value.is_finite(),
        starts: starts.len(),
    })
}

/// Global maximizer of `Psi_T` by enumeration of all zero patterns.
pub fn estimate(problem: &Problem, cfg: &SolverConfig) -> Result<EstimationResult> {
    let k = problem.penalty.entries().len();
    if k > cfg.enumeration_cap {
        return Err(Error::EnumerationCap {
            needed: k,
            cap: cfg.enumeration_cap,
            hint: "exhaustive pattern search is limited to small models; greedy support search is not provided",
        });
    }
    let masks: Vec<Vec<bool>> = (0..1usize << k)
        .map(|m| (0..k).map(|i| m >> i & 1 == 1).collect())
        .collect();
    let fits: Vec<PatternFit> = if cfg.parallel_patterns {
        masks
            .par_iter()
            .map(|free| maximize_pattern(problem, free, cfg))
            .collect::<Result<_>>()?
    } else {
        masks
            .iter()
            .map(|free| maximize_pattern(problem, free, cfg))
            .collect::<Result<_>>()?
    };

    let top = fits
        .iter()
        .map(|f| f.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let winner = if top == f64::NEG_INFINITY {
        // every pattern is infeasible; report the sparsest
        &fits[0]
    } else {
        fits.iter()
            .filter(|f| f.value >= top - cfg.tie_tol)
            .min_by_key(|f| f.active_count())
            .expect("nonempty")
    };

    let theta = winner.theta.clone();
    let active_set: Vec<usize> = problem
        .penalty
        .entries()
        .iter()
        .filter(|e| theta[e.index] != 0.0)
        .map(|e| e.index)
        .collect();
    let stats = SolverStats {
        patterns: fits.len(),
        starts: fits.iter().map(|f| f.starts).sum(),
        iterations: fits.iter().map(|f| f.iterations).sum(),
        unconverged_patterns: fits.iter().filter(|f| !f.converged).count(),
    };
    Ok(EstimationResult {
        objective: problem.objective(&theta),
        theta,
        active_set,
        patterns: fits,
        stats,
    })
}

impl EstimationResult {
    /// Per-pattern diagnostics as CSV rows.
    pub fn patterns_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            out.push_str(&format!("# {c}\n"));
        }
        out.push_str("pattern,free_mask,value,iterations,converged,theta\n");
        for (i, p) in self.patterns.iter().enumerate() {
            let mask: String = p.free.iter().map(|&f| if f { '1' } else { '0' }).collect();
            let theta: Vec<String> = p.theta.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!(
                "{i},{mask},{},{},{},\"{}\"\n",
                p.value,
                p.iterations,
                p.converged,
                theta.join(";")
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariate::MarkovCovariateSpec;
    use crate::penalty::PenaltyEntry;
    use crate::pointprocess::{IntensityModel, SuperpositionBounds};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn bounds() -> SuperpositionBounds {
        SuperpositionBounds { g_max: 20.0, alpha_max: 20.0, beta_min: -2.0, beta_max: 2.0 }
    }

    fn three_state() -> MarkovCovariateSpec {
        MarkovCovariateSpec::new(
            vec![vec![0.0], vec![0.5], vec![1.0]],
            DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.5, 0.5, -1.0, 0.5, 0.5, 0.5, -1.0]),
        )
        .unwrap()
    }

    fn sample(family: &ModelFamily, theta: Vec<f64>, spec: &MarkovCovariateSpec, horizon: f64, seed: u64) -> Dataset {
        let path = spec.simulate(horizon, seed).unwrap();
        let ev = IntensityModel::new(family.clone(), theta).unwrap().simulate_events(spec, &path, seed + 1000);
        Dataset::new(spec, &path, &ev).unwrap()
    }

    #[test]
    fn objective_examples() {
        let spec = three_state();
        let lin = ModelFamily::linear(1, 10.0).unwrap();
        let data = sample(&lin, vec![2.0], &spec, 50.0, 1);
        let zero = PenaltySpec::uniform(&[0], 0.0, 0.5, 1.0).unwrap();
        let p = Problem::new(&lin, &data, &zero).unwrap();
        assert_eq!(p.objective(&[1.3]), data.log_likelihood(&lin, &[1.3]));

        let empty = Dataset { counts: vec![0; 3], ..data.clone() };
        let pen = PenaltySpec::uniform(&[0], 1.0, 0.5, 1.0).unwrap();
        assert_eq!(penalized_objective(&lin, &empty, &pen, &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn zero_alpha_pattern_matches_one_dimensional_root() {
        let spec = three_state();
        let sup = ModelFamily::superposition(1, bounds()).unwrap();
        let data = sample(&sup, vec![2.0, 0.0, 0.0], &spec, 400.0, 3);
        let (kg, q, r) = (0.3, 0.5, 0.9);
        let pen = PenaltySpec::new(
            vec![PenaltyEntry { index: 0, kappa: kg, q }, PenaltyEntry { index: 1, kappa: 1.0, q }],
            r,
        )
        .unwrap();
        let p = Problem::new(&sup, &data, &pen).unwrap();
        let fit = maximize_pattern(&p, &[true, false], &SolverConfig::default()).unwrap();
        assert_eq!(fit.theta[1], 0.0);
        assert_eq!(fit.theta[2], 0.0);

        // bisection on N/g - T - q kappa_g T^(r/2) g^(q-1) = 0
        let n = data.total_events() as f64;
        let t = data.horizon;
        let score = |g: f64| n / g - t - q * kg * t.powf(r / 2.0) * g.powf(q - 1.0);
        let (mut lo, mut hi) = (1e-6, 20.0);
        assert!(score(lo) > 0.0 && score(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if score(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_relative_eq!(fit.theta[0], 0.5 * (lo + hi), max_relative = 1e-7);
    }

    #[test]
    fn unpenalized_linear_fit_matches_grid() {
        let spec = three_state();
        let lin = ModelFamily::linear(1, 10.0).unwrap();
        let data = sample(&lin, vec![3.0], &spec, 100.0, 5);
        let pen = PenaltySpec::uniform(&[0], 0.0, 0.5, 1.0).unwrap();
        let p = Problem::new(&lin, &data, &pen).unwrap();
        let fit = maximize_pattern(&p, &[true], &SolverConfig::default()).unwrap();
        let step = 1e-5;
        let grid_best = (1..1_000_000)
            .map(|i| i as f64 * step)
            .max_by(|a, b| p.objective(&[*a]).total_cmp(&p.objective(&[*b])))
            .unwrap();
        assert!((fit.theta[0] - grid_best).abs() <= step, "{} vs {grid_best}", fit.theta[0]);
        // closed form for a single channel: N / int x dt
        let ix: f64 = data.states.iter().zip(&data.occupation).map(|(x, o)| x[0] * o).sum();
        assert_relative_eq!(fit.theta[0], data.total_events() as f64 / ix, max_relative = 1e-7);
    }

    #[test]
    fn pattern_solve_is_deterministic() {
        let spec = three_state();
        let sup = ModelFamily::superposition(1, bounds()).unwrap();
        let data = sample(&sup, vec![1.0, 1.0, 1.0], &spec, 200.0, 7);
        let pen = PenaltySpec::uniform(&[0, 1], 0.5, 0.5, 0.9).unwrap();
        let p = Problem::new(&sup, &data, &pen).unwrap();
        let a = maximize_pattern(&p, &[true, true], &SolverConfig::default()).unwrap();
        let b = maximize_pattern(&p, &[true, true], &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huge_penalty_empties_active_set() {
        let spec = three_state();
        let sup = ModelFamily::superposition(1, bounds()).unwrap();
        let data = sample(&sup, vec![1.0, 1.0, 1.0], &spec, 50.0, 9);
        // g unpenalized: penalizing every coordinate would force lambda = 0,
        // which has likelihood -inf once any event was observed
        let pen = PenaltySpec::uniform(&[1], 1e9, 0.5, 0.9).unwrap();
        let p = Problem::new(&sup, &data, &pen).unwrap();
        let est = estimate(&p, &SolverConfig::default()).unwrap();
        assert!(est.active_set.is_empty());
        assert_eq!(&est.theta[1..], &[0.0, 0.0]);
        assert_relative_eq!(est.theta[0], data.total_events() as f64 / data.horizon, max_relative = 1e-8);
    }

    #[test]
    fn estimate_dominates_patterns_and_truth() {
        let spec = three_state();
        let sup = ModelFamily::superposition(1, bounds()).unwrap();
        let truth = vec![1.0, 2.0, 1.0];
        let data = sample(&sup, truth.clone(), &spec, 300.0, 11);
        let pen = PenaltySpec::new(
            vec![PenaltyEntry { index: 0, kappa: 0.2, q: 0.5 }, PenaltyEntry { index: 1, kappa: 1.0, q: 0.5 }],
            0.9,
        )
        .unwrap();
        let p = Problem::new(&sup, &data, &pen).unwrap();
        let est = estimate(&p, &SolverConfig::default()).unwrap();
        assert_eq!(est.patterns.len(), 4);
        for f in &est.patterns {
            assert!(est.objective >= f.value);
        }
        assert!(est.objective >= p.objective(&truth));
        assert_eq!(est.active_set, vec![0, 1]);
        assert_relative_eq!(est.objective, p.objective(&est.theta));
    }

    #[test]
    fn inactive_alpha_reports_zero_beta() {
        let spec = three_state();
        let sup = ModelFamily::superposition(2, bounds()).unwrap();
        let spec2 = MarkovCovariateSpec::product(&[spec.clone(), spec]).unwrap();
        let data = sample(&sup, vec![2.0, 0.0, 0.0, 0.0, 0.0], &spec2, 500.0, 13);
        let pen = PenaltySpec::new(
            vec![
                PenaltyEntry { index: 0, kappa: 0.1, q: 0.5 },
                PenaltyEntry { index: 1, kappa: 2.0, q: 0.5 },
                PenaltyEntry { index: 2, kappa: 2.0, q: 0.5 },
            ],
            0.9,
        )
        .unwrap();
        let p = Problem::new(&sup, &data, &pen).unwrap();
        let est = estimate(&p, &SolverConfig::default()).unwrap();
        for j in 0..2 {
            if est.theta[1 + j] == 0.0 {
                assert_eq!(est.theta[3 + j], 0.0);
            }
        }
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let spec = three_state();
        let lin = ModelFamily::linear(1, 10.0).unwrap();
        let data = sample(&lin, vec![1.0], &spec, 10.0, 1);
        let pen = PenaltySpec::uniform(&[0], 1.0, 0.5, 1.0).unwrap();
        let p = Problem::new(&lin, &data, &pen).unwrap();
        let cfg = SolverConfig { enumeration_cap: 0, ..Default::default() };
        assert!(matches!(estimate(&p, &cfg), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn parallel_and_serial_agree() {
        let spec = three_state();
        let sup = ModelFamily::superposition(1, bounds()).unwrap();
        let data = sample(&sup, vec![1.0, 1.0, -1.0], &spec, 200.0, 17);
        let pen = PenaltySpec::uniform(&[0, 1], 0.5, 0.5, 0.9).unwrap();
        let p = Problem::new(&sup, &data, &pen).unwrap();
        let a = estimate(&p, &SolverConfig::default()).unwrap();
        let b = estimate(&p, &SolverConfig { parallel_patterns: true, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }
}
