//! Bridge penalties `kappa_j * T^(r/2) * |theta_j|^(q_j)` on a subset of
//! parameter coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|x|^q` for `q` in `(0, 1]`.
pub fn bridge_value(x: f64, q: f64) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Parameter(format!("bridge exponent q={q} outside (0, 1]")));
    }
    Ok(bridge_unchecked(x, q))
}

#[inline]
pub(crate) fn bridge_unchecked(x: f64, q: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(q)
    }
}

/// One penalized coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyEntry {
    pub index: usize,
    pub kappa: f64,
    pub q: f64,
}

/// Per-coordinate Bridge penalty with a global time-rate exponent `r`.
///
/// The time-dependent weight of coordinate `j` is `xi_j(T) = kappa_j * T^(r/2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPenaltySpec", into = "RawPenaltySpec")]
pub struct PenaltySpec {
    entries: Vec<PenaltyEntry>,
    r: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPenaltySpec {
    entries: Vec<PenaltyEntry>,
    r: f64,
}

impl TryFrom<RawPenaltySpec> for PenaltySpec {
    type Error = Error;
    fn try_from(raw: RawPenaltySpec) -> Result<Self> {
        PenaltySpec::new(raw.entries, raw.r)
    }
}

impl From<PenaltySpec> for RawPenaltySpec {
    fn from(spec: PenaltySpec) -> Self {
        RawPenaltySpec {
            entries: spec.entries,
            r: spec.r,
        }
    }
}

impl PenaltySpec {
    pub fn new(mut entries: Vec<PenaltyEntry>, r: f64) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Parameter(format!("rate exponent r={r} outside (0, 1]")));
        }
        for e in &entries {
            if !(e.q > 0.0 && e.q <= 1.0) {
                return Err(Error::Parameter(format!(
                    "coordinate {}: q={} outside (0, 1]",
                    e.index, e.q
                )));
            }
            if !(e.kappa >= 0.0) || !e.kappa.is_finite() {
                return Err(Error::Parameter(format!(
                    "coordinate {}: kappa={} must be finite and nonnegative",
                    e.index, e.kappa
                )));
            }
        }
        entries.sort_by_key(|e| e.index);
        if entries.windows(2).any(|w| w[0].index == w[1].index) {
            return Err(Error::Parameter("duplicate penalized coordinate".into()));
        }
        Ok(Self { entries, r })
    }

    /// Same `kappa` and `q` on every listed coordinate.
    pub fn uniform(indices: &[usize], kappa: f64, q: f64, r: f64) -> Result<Self> {
        Self::new(
            indices
                .iter()
                .map(|&index| PenaltyEntry { index, kappa, q })
                .collect(),
            r,
        )
    }

    /// Replace the `kappa`s, keeping coordinates, exponents and `r`.
    ///
    /// This is the hook for data-dependent weights (e.g. adaptive Lasso with
    /// `q = 1`), where each replication supplies its own `kappa`s.
    pub fn with_kappas(&self, kappas: &[f64]) -> Result<Self> {
        if kappas.len() != self.entries.len() {
            return Err(Error::Parameter(format!(
                "expected {} kappas, got {}",
                self.entries.len(),
                kappas.len()
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(kappas)
            .map(|(e, &kappa)| PenaltyEntry { kappa, ..*e })
            .collect();
        Self::new(entries, self.r)
    }

    pub fn entries(&self) -> &[PenaltyEntry] {
        &self.entries
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn indices(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn entry(&self, index: usize) -> Option<&PenaltyEntry> {
        self.entries
            .binary_search_by_key(&index, |e| e.index)
            .ok()
            .map(|k| &self.entries[k])
    }

    pub fn max_q(&self) -> f64 {
        self.entries.iter().map(|e| e.q).fold(0.0, f64::max)
    }

    /// Checks `max q_j < r`, the requirement for penalized coordinates to
    /// shrink to zero at rate `T^(r/(2q))`.
    pub fn validate_shrinkage(&self) -> Result<()> {
        let q = self.max_q();
        if self.entries.is_empty() || q < self.r {
            Ok(())
        } else {
            Err(Error::Parameter(format!(
                "need max q < r for shrinkage, got q={q}, r={}",
                self.r
            )))
        }
    }

    /// `T^(r/2)`, the common time factor of all weights.
    pub fn time_factor(&self, horizon: f64) -> f64 {
        horizon.powf(self.r / 2.0)
    }

    /// `xi_j(T) = kappa_j * T^(r/2)`; zero for unpenalized coordinates.
    pub fn xi_weight(&self, index: usize, horizon: f64) -> f64 {
        self.entry(index)
            .map_or(0.0, |e| e.kappa * self.time_factor(horizon))
    }

    /// The time-invariant part `sum_j kappa_j |theta_j|^(q_j)`.
    pub fn time_invariant(&self, theta: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|e| e.kappa * bridge_unchecked(theta[e.index], e.q))
            .sum()
    }

    /// `sum_j xi_j(T) |theta_j|^(q_j)`.
    pub fn penalty_total(&self, theta: &[f64], horizon: f64) -> f64 {
        self.time_factor(horizon) * self.time_invariant(theta)
    }

    /// Gradient of [`Self::penalty_total`] with respect to coordinates that
    /// are strictly nonzero. Zero coordinates contribute nothing.
    pub fn add_gradient(&self, theta: &[f64], horizon: f64, scale: f64, grad: &mut [f64]) {
        let factor = self.time_factor(horizon) * scale;
        for e in &self.entries {
            let x = theta[e.index];
            if x != 0.0 && e.kappa != 0.0 {
                grad[e.index] += factor * e.kappa * e.q * x.abs().powf(e.q - 1.0) * x.signum();
            }
        }
    }
}

/// Outcome of [`check_unique_minimizer`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniquenessCheck {
    pub unique: bool,
    /// Smallest `Pe(theta) - Pe(candidate)` over sampled points outside the
    /// proximity radius; `+inf` if there are none.
    pub margin: f64,
}

/// Checks that `candidate` uniquely minimizes the time-invariant penalty on a
/// sample of the true-value set.
///
/// Points within `radius` (Euclidean) of the candidate are ignored; every
/// other point must exceed the candidate's penalty by more than `gap`.
pub fn check_unique_minimizer(
    candidate: &[f64],
    true_set: &[Vec<f64>],
    spec: &PenaltySpec,
    gap: f64,
    radius: f64,
) -> Result<UniquenessCheck> {
    if true_set.is_empty() {
        return Err(Error::Input("true-value sample is empty".into()));
    }
    if let Some(max) = spec.entries.last().map(|e| e.index) {
        if candidate.len() <= max || true_set.iter().any(|t| t.len() != candidate.len()) {
            return Err(Error::Input("dimension mismatch in true-value sample".into()));
        }
    }
    let base = spec.time_invariant(candidate);
    let margin = true_set
        .iter()
        .filter(|theta| {
            let d2: f64 = theta
                .iter()
                .zip(candidate)
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            d2.sqrt() > radius
        })
        .map(|theta| spec.time_invariant(theta) - base)
        .fold(f64::INFINITY, f64::min);
    Ok(UniquenessCheck {
        unique: margin > gap,
        margin,
    })
}
