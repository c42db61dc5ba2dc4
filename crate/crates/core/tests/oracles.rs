//! End-to-end checks against independently computed reference values.

use nalgebra::DMatrix;
use pqmle::config::ExperimentConfig;
use pqmle::covariate::{CovariatePath, MarkovCovariateSpec};
use pqmle::estimator::{estimate, Problem, SolverConfig};
use pqmle::parsimony::{brute_force_pe_min, select_parsimonious, BruteForceConfig, ParsimonyConfig, TrueValueSet};
use pqmle::penalty::{PenaltyEntry, PenaltySpec};
use pqmle::pointprocess::{Dataset, EventPath, ModelFamily};
use proptest::prelude::*;

/// Homogeneous Poisson data on one constant state: `n` events over `[0, t]`.
fn poisson_data(n: usize, t: f64) -> (MarkovCovariateSpec, Dataset) {
    let spec = MarkovCovariateSpec::new(vec![vec![1.0]], DMatrix::zeros(1, 1)).unwrap();
    let path = CovariatePath::new(t, vec![0.0], vec![0]).unwrap();
    let times = (0..n).map(|i| t * (i as f64 + 0.5) / n as f64).collect();
    let data = Dataset::new(&spec, &path, &EventPath::new(t, times).unwrap()).unwrap();
    (spec, data)
}

/// Maximizes `n log a - a t - w a^q` over `[0, m]` by grid search plus golden section.
fn bridge_poisson_argmax(n: f64, t: f64, w: f64, q: f64, m: f64) -> f64 {
    let f = |a: f64| if a <= 0.0 { f64::NEG_INFINITY } else { n * a.ln() - a * t - w * a.powf(q) };
    let grid = 200_000;
    let (mut best, mut arg) = (f64::NEG_INFINITY, 0.0);
    for i in 1..=grid {
        let a = m * i as f64 / grid as f64;
        if f(a) > best {
            best = f(a);
            arg = a;
        }
    }
    let h = m / grid as f64;
    let (mut lo, mut hi) = ((arg - h).max(1e-300), (arg + h).min(m));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        if f(x1) < f(x2) {
            lo = x1;
        } else {
            hi = x2;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn penalized_poisson_rate_matches_scalar_search() {
    let family = ModelFamily::linear(1, 50.0).unwrap();
    for &(n, t, kappa, q, r) in &[(300, 100.0, 0.5, 0.5, 0.9), (40, 20.0, 2.0, 0.3, 1.0), (1000, 250.0, 0.1, 0.7, 0.8)] {
        let (_, data) = poisson_data(n, t);
        let penalty = PenaltySpec::new(vec![PenaltyEntry { index: 0, kappa, q }], r).unwrap();
        let fit = estimate(&Problem::new(&family, &data, &penalty).unwrap(), &SolverConfig::default()).unwrap();
        let w = kappa * t.powf(r / 2.0);
        let oracle = bridge_poisson_argmax(n as f64, t, w, q, 50.0);
        assert!((fit.theta[0] - oracle).abs() < 1e-6 * oracle, "n={n}: {} vs {oracle}", fit.theta[0]);
    }
}

#[test]
fn unpenalized_poisson_rate_is_count_over_time() {
    let family = ModelFamily::linear(1, 50.0).unwrap();
    let (_, data) = poisson_data(123, 40.0);
    let penalty = PenaltySpec::uniform(&[0], 0.0, 0.5, 1.0).unwrap();
    let fit = estimate(&Problem::new(&family, &data, &penalty).unwrap(), &SolverConfig::default()).unwrap();
    assert!((fit.theta[0] - 123.0 / 40.0).abs() < 1e-8);
}

fn instance() -> impl Strategy<Value = (DMatrix<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=4)
        .prop_flat_map(|a| (Just(a), 1..a))
        .prop_flat_map(|(a, r)| {
            (
                Just((a, r)),
                proptest::sample::subsequence((0..a).collect::<Vec<_>>(), r),
                proptest::collection::vec(0.2f64..2.0, (a - r) * r),
                proptest::collection::vec(0.0f64..3.0, a),
                proptest::collection::vec(0.5f64..2.0, a),
            )
        })
        .prop_map(|((a, r), d, b, alpha, kappa)| {
            let mut m = DMatrix::zeros(a, r);
            let mut k = 0;
            for i in 0..a {
                if let Some(col) = d.iter().position(|&j| j == i) {
                    m[(i, col)] = 1.0;
                } else {
                    for col in 0..r {
                        m[(i, col)] = b[k];
                        k += 1;
                    }
                }
            }
            (m, alpha, kappa)
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn parsimonious_value_is_the_search_minimum((a, alpha, kappa) in instance()) {
        let entries = kappa.iter().enumerate().map(|(index, &kappa)| PenaltyEntry { index, kappa, q: 0.5 }).collect();
        let pe = PenaltySpec::new(entries, 1.0).unwrap();
        let cfg = ParsimonyConfig::default();
        // ties are reported, not resolved; nothing to compare then
        let Ok(sel) = select_parsimonious(&alpha, &a, &pe, 50.0, &cfg) else { return Ok(()) };
        let set = TrueValueSet::new(alpha.clone(), &a, 50.0, cfg.rank_tol).unwrap();
        let bf_cfg = BruteForceConfig { grid_points: 20_000, random_points: 20_000, ..Default::default() };
        let bf = brute_force_pe_min(&set, &pe, &bf_cfg).unwrap();
        let dist = bf.point.iter().zip(&sel.alpha).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(bf.value >= pe.time_invariant(&sel.alpha) - 1e-9);
        prop_assert!(dist <= 1e-3, "search {:?} vs table {:?}", bf.point, sel.alpha);
    }
}

#[test]
fn example_configs_build() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["superposition.toml", "linear.toml", "smoke.json"] {
        let cfg = ExperimentConfig::load(&dir.join(name)).unwrap();
        let scenario = cfg.scenario().unwrap();
        assert_eq!(scenario.target.len(), cfg.family().unwrap().dim(), "{name}");
    }
    let linear = ExperimentConfig::load(&dir.join("linear.toml")).unwrap().scenario().unwrap();
    assert_eq!(linear.target, vec![10.0, 0.0, 10.0]);
}
