//! Rate matrices, the Gaussian limit law of the identifiable block, and the
//! local parameter set.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::covariate::MarkovCovariateSpec;
use crate::error::{Error, Result};
use crate::penalty::PenaltySpec;

/// Normalization `a_T`: `T^{-1/2}` off `J0`, `T^{-r/(2q)}` on `J0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePlan {
    p: usize,
    j0: Vec<usize>,
    r: f64,
    q: f64,
}

impl RatePlan {
    pub fn new(p: usize, mut j0: Vec<usize>, r: f64, q: f64) -> Result<Self> {
        if !(q > 0.0 && q < r && r <= 1.0) {
            return Err(Error::Construction(format!("need 0 < q < r <= 1, got q = {q}, r = {r}")));
        }
        j0.sort_unstable();
        j0.dedup();
        if j0.iter().any(|&k| k >= p) {
            return Err(Error::Construction(format!("J0 index out of range for dimension {p}")));
        }
        Ok(Self { p, j0, r, q })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn j0(&self) -> &[usize] {
        &self.j0
    }

    /// `rho = r / q`.
    pub fn rho(&self) -> f64 {
        self.r / self.q
    }

    /// Exponent `e_k` with `a_T[k] = T^{-e_k}`.
    pub fn exponent(&self, k: usize) -> f64 {
        if self.j0.binary_search(&k).is_ok() {
            self.r / (2.0 * self.q)
        } else {
            0.5
        }
    }

    pub fn rate_diagonal(&self, horizon: f64) -> Result<Vec<f64>> {
        if !(horizon > 1.0 && horizon.is_finite()) {
            return Err(Error::Parameter(format!("rate matrix needs T > 1, got {horizon}")));
        }
        Ok((0..self.p).map(|k| horizon.powf(-self.exponent(k))).collect())
    }

    pub fn rate_matrix(&self, horizon: f64) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(&DVector::from_vec(self.rate_diagonal(horizon)?)))
    }

    /// `a_T^{-1}(theta - theta*)`.
    pub fn scaled_deviation(&self, theta: &[f64], theta_star: &[f64], horizon: f64) -> Result<Vec<f64>> {
        if theta.len() != self.p || theta_star.len() != self.p {
            return Err(Error::Input("parameter length differs from the plan".into()));
        }
        Ok(self
            .rate_diagonal(horizon)?
            .iter()
            .zip(theta.iter().zip(theta_star))
            .map(|(a, (t, s))| (t - s) / a)
            .collect())
    }
}

/// `N(Gamma^{-1} mu, Gamma^{-1})`, the limit of the scaled identifiable block.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitLaw {
    pub labels: Vec<String>,
    /// Positions of the block in the full parameter vector.
    pub indices: Vec<usize>,
    pub gamma_bar: DMatrix<f64>,
    pub mu_bar: DVector<f64>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl LimitLaw {
    fn from_parts(labels: Vec<String>, indices: Vec<usize>, gamma_bar: DMatrix<f64>, mu_bar: DVector<f64>) -> Result<Self> {
        let chol = gamma_bar
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("Gamma-bar is not positive definite".into()))?;
        let covariance = chol.inverse();
        let mean = &covariance * &mu_bar;
        Ok(Self { labels, indices, gamma_bar, mu_bar, mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }
}

fn check_positive_definite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    let eig = m.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().copied().fold(0.0f64, |a, v| a.max(v.abs()));
    let rank = eig.iter().filter(|&&v| v > 1e-10 * max.max(f64::MIN_POSITIVE)).count();
    if rank < m.nrows() {
        return Err(Error::Singular(format!(
            "{what}: Gamma-bar has rank {rank} of {}",
            m.nrows()
        )));
    }
    Ok(())
}

/// True parameter of the superposition model with its active channel set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpositionTruth {
    pub g: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl SuperpositionTruth {
    pub fn new(g: f64, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::Input("alpha and beta lengths differ".into()));
        }
        if !(g > 0.0) || alpha.iter().any(|&a| !(a >= 0.0)) {
            return Err(Error::Parameter("need g > 0 and alpha >= 0".into()));
        }
        Ok(Self { g, alpha, beta })
    }

    pub fn channels(&self) -> usize {
        self.alpha.len()
    }

    /// Channels with `alpha_i > 0`.
    pub fn active(&self) -> Vec<usize> {
        (0..self.channels()).filter(|&i| self.alpha[i] > 0.0).collect()
    }

    /// `(g, alpha, beta)` with `beta_k` set to 0 on inactive channels.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = vec![self.g];
        t.extend(&self.alpha);
        t.extend(self.alpha.iter().zip(&self.beta).map(|(&a, &b)| if a > 0.0 { b } else { 0.0 }));
        t
    }

    pub fn intensity(&self, x: &[f64]) -> f64 {
        self.g
            + self
                .alpha
                .iter()
                .zip(&self.beta)
                .zip(x)
                .map(|((a, b), xi)| a * (b * xi).exp())
                .sum::<f64>()
    }

    /// Identifiable block `(g, beta_A, alpha_A)` as positions in [`Self::theta`].
    pub fn identifiable_indices(&self) -> Vec<usize> {
        let a = self.channels();
        let act = self.active();
        let mut idx = vec![0];
        idx.extend(act.iter().map(|i| 1 + a + i));
        idx.extend(act.iter().map(|i| 1 + i));
        idx
    }

    /// Positions of `alpha_k`, `k` inactive.
    pub fn zero_indices(&self) -> Vec<usize> {
        (0..self.channels()).filter(|&i| self.alpha[i] == 0.0).map(|i| 1 + i).collect()
    }
}

fn bias_entry(penalty: &PenaltySpec, index: usize, value: f64) -> f64 {
    match penalty.entry(index) {
        Some(e) if penalty.r() == 1.0 => -e.q * e.kappa * value.powf(e.q - 1.0),
        _ => 0.0,
    }
}

/// Limit law of `sqrt(T)(g - g*, beta_A - beta*_A, alpha_A - alpha*_A)`.
///
/// `Gamma = int v v' / lambda* dnu` with
/// `v(x) = (1, (alpha*_i x_i e^{beta*_i x_i})_i, (e^{beta*_i x_i})_i)`.
pub fn gamma_mu_superposition(truth: &SuperpositionTruth, spec: &MarkovCovariateSpec, penalty: &PenaltySpec) -> Result<LimitLaw> {
    if spec.dim() != truth.channels() {
        return Err(Error::Input("covariate dimension differs from the number of channels".into()));
    }
    let act = truth.active();
    let n = 1 + 2 * act.len();
    let mut gamma = DMatrix::zeros(n, n);
    for (x, &p) in spec.states().iter().zip(spec.stationary()) {
        let mut v = vec![1.0];
        v.extend(act.iter().map(|&i| truth.alpha[i] * x[i] * (truth.beta[i] * x[i]).exp()));
        v.extend(act.iter().map(|&i| (truth.beta[i] * x[i]).exp()));
        let v = DVector::from_vec(v);
        gamma += (&v * v.transpose()) * (p / truth.intensity(x));
    }
    check_positive_definite(&gamma, "superposition block is not identifiable")?;

    let mut mu = vec![bias_entry(penalty, 0, truth.g)];
    mu.extend(act.iter().map(|_| 0.0));
    mu.extend(act.iter().map(|&i| bias_entry(penalty, 1 + i, truth.alpha[i])));

    let mut labels = vec!["g".to_string()];
    labels.extend(act.iter().map(|i| format!("beta_{}", i + 1)));
    labels.extend(act.iter().map(|i| format!("alpha_{}", i + 1)));
    LimitLaw::from_parts(labels, truth.identifiable_indices(), gamma, DVector::from_vec(mu))
}

/// `int x_{J1} x_{J1}' / (alpha* . x) 1{alpha* . x > 0} dnu`.
pub fn gamma_linear(alpha: &[f64], j1: &[usize], spec: &MarkovCovariateSpec) -> Result<DMatrix<f64>> {
    if alpha.len() != spec.dim() || j1.iter().any(|&j| j >= alpha.len()) {
        return Err(Error::Input("alpha or J1 does not match the covariate dimension".into()));
    }
    let n = j1.len();
    let mut gamma = DMatrix::zeros(n, n);
    for (x, &p) in spec.states().iter().zip(spec.stationary()) {
        let lam: f64 = alpha.iter().zip(x).map(|(a, b)| a * b).sum();
        if lam > 0.0 {
            let v = DVector::from_iterator(n, j1.iter().map(|&j| x[j]));
            gamma += (&v * v.transpose()) * (p / lam);
        }
    }
    check_positive_definite(&gamma, "Ker A meets span{e_j : j in J1}")?;
    Ok(gamma)
}

/// Limit law of `sqrt(T)(alpha_{J1} - alpha**_{J1})` around the parsimonious value.
pub fn linear_limit_law(alpha_ss: &[f64], spec: &MarkovCovariateSpec, penalty: &PenaltySpec) -> Result<LimitLaw> {
    let j1: Vec<usize> = (0..alpha_ss.len()).filter(|&j| alpha_ss[j] != 0.0).collect();
    let gamma = gamma_linear(alpha_ss, &j1, spec)?;
    let mu = DVector::from_iterator(j1.len(), j1.iter().map(|&j| bias_entry(penalty, j, alpha_ss[j])));
    let labels = j1.iter().map(|j| format!("alpha_{}", j + 1)).collect();
    LimitLaw::from_parts(labels, j1, gamma, mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocalTag {
    FullLine,
    HalfLineNonneg,
    HalfLineNonpos,
}

/// Linear constraint `sum_k c_k theta_k <= bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub coefficients: Vec<(usize, f64)>,
    pub bound: f64,
}

/// Box `prod [lower_k, upper_k]`, optionally cut by linear couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub couplings: Vec<Coupling>,
}

impl ParameterSpace {
    pub fn product(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Input("box needs lower <= upper coordinatewise".into()));
        }
        Ok(Self { lower, upper, couplings: Vec::new() })
    }

    pub fn with_coupling(mut self, c: Coupling) -> Self {
        self.couplings.push(c);
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }
}

/// Limit of `a_T^{-1}(Theta - theta*)` for a box: a half-line where `theta*`
/// sits on an edge, the full line otherwise.
pub fn local_set_u(space: &ParameterSpace, theta_star: &[f64]) -> Result<Vec<LocalTag>> {
    if theta_star.len() != space.dim() {
        return Err(Error::Input("theta* length differs from the box".into()));
    }
    theta_star
        .iter()
        .zip(space.lower.iter().zip(&space.upper))
        .enumerate()
        .map(|(k, (&t, (&l, &u)))| {
            if !(l <= t && t <= u) {
                Err(Error::Input(format!("theta*[{k}] = {t} lies outside [{l}, {u}]")))
            } else if t == l {
                Ok(LocalTag::HalfLineNonneg)
            } else if t == u {
                Ok(LocalTag::HalfLineNonpos)
            } else {
                Ok(LocalTag::FullLine)
            }
        })
        .collect()
}

/// Whether `Theta` splits as a product across the `J0` and non-`J0` coordinates.
pub fn check_condition_s(space: &ParameterSpace, j0: &[usize]) -> bool {
    space.couplings.iter().all(|c| {
        let touched: Vec<bool> = c
            .coefficients
            .iter()
            .filter(|(_, w)| *w != 0.0)
            .map(|(k, _)| j0.contains(k))
            .collect();
        touched.iter().all(|&b| b) || touched.iter().all(|&b| !b)
    })
}
