//! Replicated simulate-and-estimate experiments compared against the limit law.

use nalgebra::DMatrix;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{gamma_mu_superposition, linear_limit_law, LimitLaw, RatePlan, SuperpositionTruth};
use crate::covariate::MarkovCovariateSpec;
use crate::error::{Error, Result};
use crate::estimator::{estimate, Problem, SolverConfig};
use crate::parsimony::{select_parsimonious, ParsimonyConfig};
use crate::penalty::PenaltySpec;
use crate::pointprocess::{Dataset, IntensityModel, ModelFamily, SuperpositionBounds};
use crate::stats::{self, Interval};

pub const REPORT_SCHEMA: &str = "v1";

/// A fully specified data-generating process together with its estimation target.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub family: ModelFamily,
    pub covariate: MarkovCovariateSpec,
    pub penalty: PenaltySpec,
    /// Parameter used to generate data.
    pub theta_sim: Vec<f64>,
    /// Value the estimator should approach.
    pub target: Vec<f64>,
    /// Penalized coordinates that are nonzero in `target`.
    pub support: Vec<usize>,
    /// Penalized coordinates that are zero in `target`.
    pub zeros: Vec<usize>,
    pub limit: LimitLaw,
    /// `r / (2q)` for the zero coordinates.
    pub shrink_exponent: f64,
}

fn split_support(penalty: &PenaltySpec, target: &[f64]) -> (Vec<usize>, Vec<usize>) {
    penalty.indices().into_iter().partition(|&k| target[k] != 0.0)
}

fn shrink_exponent(penalty: &PenaltySpec, zeros: &[usize]) -> Result<f64> {
    let qs: Vec<f64> = zeros.iter().filter_map(|&k| penalty.entry(k)).map(|e| e.q).collect();
    let q = qs.first().copied().unwrap_or(penalty.max_q());
    if qs.iter().any(|&v| v != q) {
        return Err(Error::Construction("zero coordinates must share one exponent q".into()));
    }
    Ok(RatePlan::new(1, vec![0], penalty.r(), q)?.exponent(0))
}

impl Scenario {
    pub fn superposition(
        name: impl Into<String>,
        covariate: MarkovCovariateSpec,
        truth: SuperpositionTruth,
        bounds: SuperpositionBounds,
        penalty: PenaltySpec,
    ) -> Result<Self> {
        let family = ModelFamily::superposition(truth.channels(), bounds)?;
        let theta = truth.theta();
        family.check_theta(&theta)?;
        penalty.validate_shrinkage()?;
        let limit = gamma_mu_superposition(&truth, &covariate, &penalty)?;
        let (support, zeros) = split_support(&penalty, &theta);
        let shrink_exponent = shrink_exponent(&penalty, &zeros)?;
        Ok(Self {
            name: name.into(),
            family,
            covariate,
            penalty,
            theta_sim: theta.clone(),
            target: theta,
            support,
            zeros,
            limit,
            shrink_exponent,
        })
    }

    /// Linear model; the target is the parsimonious true value.
    pub fn linear(
        name: impl Into<String>,
        covariate: MarkovCovariateSpec,
        alpha_star: Vec<f64>,
        alpha_max: f64,
        penalty: PenaltySpec,
        parsimony: &ParsimonyConfig,
    ) -> Result<Self> {
        let family = ModelFamily::linear(covariate.dim(), alpha_max)?;
        family.check_theta(&alpha_star)?;
        penalty.validate_shrinkage()?;
        let a = covariate.collinearity_matrix()?;
        let sel = select_parsimonious(&alpha_star, &a, &penalty, alpha_max, parsimony)?;
        if !sel.interior {
            return Err(Error::Construction("parsimonious value lies on the upper box edge".into()));
        }
        let limit = linear_limit_law(&sel.alpha, &covariate, &penalty)?;
        let (support, zeros) = split_support(&penalty, &sel.alpha);
        let shrink_exponent = shrink_exponent(&penalty, &zeros)?;
        Ok(Self {
            name: name.into(),
            family,
            covariate,
            penalty,
            theta_sim: alpha_star,
            target: sel.alpha,
            support,
            zeros,
            limit,
            shrink_exponent,
        })
    }

    /// Same scenario with every penalty weight set to zero (the target is kept).
    pub fn unpenalized(&self) -> Result<Self> {
        let zero = vec![0.0; self.penalty.entries().len()];
        Ok(Self { penalty: self.penalty.with_kappas(&zero)?, ..self.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub ladder: Vec<f64>,
    pub reps: usize,
    pub seed_base: u64,
    pub bootstrap: usize,
    pub solver: SolverConfig,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            ladder: vec![500.0, 2000.0, 8000.0],
            reps: 200,
            seed_base: 1,
            bootstrap: 1000,
            solver: SolverConfig::default(),
        }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub horizon: f64,
    pub rep: usize,
    pub seed: u64,
    pub events: u64,
    /// Empty when estimation failed.
    pub theta: Vec<f64>,
    pub active_set: Vec<usize>,
    pub correct_selection: bool,
    pub error: Option<String>,
}

/// Simulates one data set with `seed` and fits it.
pub fn run_replication(scenario: &Scenario, horizon: f64, rep: usize, seed: u64, solver: &SolverConfig) -> RepRecord {
    let mut record = RepRecord {
        horizon,
        rep,
        seed,
        events: 0,
        theta: Vec::new(),
        active_set: Vec::new(),
        correct_selection: false,
        error: None,
    };
    let fit = (|| -> Result<_> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let path = scenario.covariate.simulate_with_rng(horizon, &mut rng)?;
        let model = IntensityModel::new(scenario.family.clone(), scenario.theta_sim.clone())?;
        let data = Dataset::sample_counts(&model, &scenario.covariate, &path, &mut rng)?;
        let problem = Problem::new(&scenario.family, &data, &scenario.penalty)?;
        Ok((data.total_events(), estimate(&problem, solver)?))
    })();
    match fit {
        Ok((events, est)) => {
            record.events = events;
            record.correct_selection = est.active_set == scenario.support;
            record.active_set = est.active_set;
            record.theta = est.theta;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}

/// Aggregates at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSummary {
    pub horizon: f64,
    pub reps: usize,
    pub failures: usize,
    /// Frequency of the exact target support, with a bootstrap interval.
    pub selection: Interval,
    /// Frequency of `theta_k = 0` for every zero coordinate.
    pub zero_frequency: f64,
    /// Frequency of `theta_i != 0` for every support coordinate.
    pub support_frequency: f64,
    /// Replications with the correct support, used for the block statistics.
    pub selected: usize,
    pub scaled_mean: Vec<f64>,
    pub scaled_covariance: Vec<Vec<f64>>,
    /// `||cov - Gamma^{-1}||_F / ||Gamma^{-1}||_F`.
    pub covariance_rel_error: f64,
    /// `|mean - Gamma^{-1} mu| / standard error`, per coordinate.
    pub mean_error_se: Vec<f64>,
    pub ks_p_values: Vec<f64>,
    /// Median and 0.9 quantile of `max_k T^{r/(2q)} |theta_k|` over zero coordinates.
    pub shrinkage_median: Interval,
    pub shrinkage_q90: f64,
    /// Mean Euclidean distance to the target over support and zero coordinates.
    pub mean_distance: f64,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn summarize(scenario: &Scenario, horizon: f64, records: &[RepRecord], bootstrap: usize, seed: u64) -> HorizonSummary {
    let ok: Vec<&RepRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let indicator = |f: &dyn Fn(&RepRecord) -> bool| -> Vec<f64> {
        ok.iter().map(|r| if f(r) { 1.0 } else { 0.0 }).collect()
    };
    let sel = indicator(&|r| r.correct_selection);
    let (lo, hi) = stats::bootstrap_ci(&sel, stats::mean, bootstrap, 0.95, seed);
    let zero_frequency = stats::mean(&indicator(&|r| scenario.zeros.iter().all(|&k| r.theta[k] == 0.0)));
    let support_frequency = stats::mean(&indicator(&|r| scenario.support.iter().all(|&k| r.theta[k] != 0.0)));

    let root = horizon.sqrt();
    let block: Vec<Vec<f64>> = ok
        .iter()
        .filter(|r| r.correct_selection)
        .map(|r| scenario.limit.indices.iter().map(|&k| root * (r.theta[k] - scenario.target[k])).collect())
        .collect();
    let d = scenario.limit.dim();
    let n = block.len();
    let (scaled_mean, cov) = if n >= 2 {
        (stats::mean_vector(&block), stats::covariance(&block))
    } else {
        (vec![f64::NAN; d], DMatrix::from_element(d, d, f64::NAN))
    };
    let covariance_rel_error = stats::frobenius_rel_error(&cov, &scenario.limit.covariance);
    let mean_error_se = (0..d)
        .map(|i| (scaled_mean[i] - scenario.limit.mean[i]).abs() / (cov[(i, i)] / n as f64).sqrt())
        .collect();
    let ks_p_values = (0..d)
        .map(|i| {
            let col: Vec<f64> = block.iter().map(|b| b[i]).collect();
            stats::ks_normal(&col, scenario.limit.mean[i], scenario.limit.covariance[(i, i)].sqrt()).p_value
        })
        .collect();

    let scale = horizon.powf(scenario.shrink_exponent);
    let shrink: Vec<f64> = ok
        .iter()
        .map(|r| scenario.zeros.iter().map(|&k| scale * r.theta[k].abs()).fold(0.0, f64::max))
        .collect();
    let (slo, shi) = stats::bootstrap_ci(&shrink, stats::median, bootstrap, 0.95, seed ^ 0x5eed);
    let coords: Vec<usize> = scenario.support.iter().chain(&scenario.zeros).copied().collect();
    let distances: Vec<f64> = ok
        .iter()
        .map(|r| coords.iter().map(|&k| (r.theta[k] - scenario.target[k]).powi(2)).sum::<f64>().sqrt())
        .collect();

    HorizonSummary {
        horizon,
        reps: records.len(),
        failures: records.len() - ok.len(),
        selection: Interval { estimate: stats::mean(&sel), low: lo, high: hi },
        zero_frequency,
        support_frequency,
        selected: n,
        scaled_mean,
        scaled_covariance: matrix_rows(&cov),
        covariance_rel_error,
        mean_error_se,
        ks_p_values,
        shrinkage_median: Interval { estimate: stats::median(&shrink), low: slo, high: shi },
        shrinkage_q90: stats::quantile(&shrink, 0.9),
        mean_distance: stats::mean(&distances),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub labels: Vec<String>,
    pub indices: Vec<usize>,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub gamma_bar: Vec<Vec<f64>>,
    pub mu_bar: Vec<f64>,
}

impl From<&LimitLaw> for LimitSummary {
    fn from(l: &LimitLaw) -> Self {
        Self {
            labels: l.labels.clone(),
            indices: l.indices.clone(),
            mean: l.mean.iter().copied().collect(),
            covariance: matrix_rows(&l.covariance),
            gamma_bar: matrix_rows(&l.gamma_bar),
            mu_bar: l.mu_bar.iter().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub scenario: String,
    pub seed_base: u64,
    pub reps: usize,
    pub ladder: Vec<f64>,
    pub target: Vec<f64>,
    pub support: Vec<usize>,
    pub zeros: Vec<usize>,
    pub limit: LimitSummary,
    pub summaries: Vec<HorizonSummary>,
    #[serde(skip)]
    pub records: Vec<RepRecord>,
}

/// Runs every horizon of the ladder; replications run on the current rayon pool.
/// Replication `k` uses seed `seed_base + k` at every horizon.
pub fn run_monte_carlo(scenario: &Scenario, cfg: &MonteCarloConfig) -> Result<Report> {
    if cfg.ladder.is_empty() || cfg.ladder.iter().any(|&t| !(t > 1.0 && t.is_finite())) {
        return Err(Error::Parameter("ladder needs horizons T > 1".into()));
    }
    if cfg.reps == 0 {
        return Err(Error::Parameter("need at least one replication".into()));
    }
    let mut summaries = Vec::new();
    let mut records = Vec::new();
    for (i, &horizon) in cfg.ladder.iter().enumerate() {
        let recs: Vec<RepRecord> = (0..cfg.reps)
            .into_par_iter()
            .map(|k| run_replication(scenario, horizon, k, cfg.seed_base.wrapping_add(k as u64), &cfg.solver))
            .collect();
        summaries.push(summarize(scenario, horizon, &recs, cfg.bootstrap, cfg.seed_base ^ (i as u64 + 1) << 32));
        records.extend(recs);
    }
    Ok(Report {
        schema: REPORT_SCHEMA.into(),
        scenario: scenario.name.clone(),
        seed_base: cfg.seed_base,
        reps: cfg.reps,
        ladder: cfg.ladder.clone(),
        target: scenario.target.clone(),
        support: scenario.support.clone(),
        zeros: scenario.zeros.clone(),
        limit: (&scenario.limit).into(),
        summaries,
        records,
    })
}

fn header(out: &mut String, comments: &[String]) {
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
}

impl Report {
    /// One row per `(T, statistic)`.
    pub fn statistics_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        header(&mut out, comments);
        out.push_str("T,statistic,value,ci_low,ci_high\n");
        for s in &self.summaries {
            let mut row = |name: &str, v: f64, lo: f64, hi: f64| {
                out.push_str(&format!("{},{},{},{},{}\n", s.horizon, name, v, lo, hi));
            };
            let nan = f64::NAN;
            row("selection_frequency", s.selection.estimate, s.selection.low, s.selection.high);
            row("zero_frequency", s.zero_frequency, nan, nan);
            row("support_frequency", s.support_frequency, nan, nan);
            row("failures", s.failures as f64, nan, nan);
            row("selected", s.selected as f64, nan, nan);
            row("covariance_rel_error", s.covariance_rel_error, nan, nan);
            for (i, label) in self.limit.labels.iter().enumerate() {
                row(&format!("scaled_mean_{label}"), s.scaled_mean[i], nan, nan);
                row(&format!("mean_error_se_{label}"), s.mean_error_se[i], nan, nan);
                row(&format!("ks_p_{label}"), s.ks_p_values[i], nan, nan);
            }
            row("shrinkage_median", s.shrinkage_median.estimate, s.shrinkage_median.low, s.shrinkage_median.high);
            row("shrinkage_q90", s.shrinkage_q90, nan, nan);
            row("mean_distance", s.mean_distance, nan, nan);
        }
        out
    }

    /// One row per replication, with its seed for replay.
    pub fn records_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        header(&mut out, comments);
        let p = self.target.len();
        out.push_str("T,rep,seed,events,correct_selection,error");
        for k in 0..p {
            out.push_str(&format!(",theta_{k}"));
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{}",
                r.horizon,
                r.rep,
                r.seed,
                r.events,
                r.correct_selection,
                r.error.as_deref().unwrap_or("").replace(',', ";")
            ));
            for k in 0..p {
                out.push_str(&format!(",{}", r.theta.get(k).copied().unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
        out
    }
}
