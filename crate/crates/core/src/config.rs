//! Experiment configuration: one file describing a scenario and how to run it.
//!
//! The same schema is read from TOML or JSON. The config hash is the SHA-256 of
//! the canonical JSON encoding, so both encodings of one experiment share it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::SuperpositionTruth;
use crate::covariate::{Collinearity, MarkovCovariateSpec};
use crate::error::{Error, Result};
use crate::estimator::SolverConfig;
use crate::montecarlo::{MonteCarloConfig, Scenario};
use crate::parsimony::{BruteForceConfig, ParsimonyConfig};
use crate::penalty::PenaltySpec;
use crate::pointprocess::{ModelFamily, SuperpositionBounds};

/// Independent channel chains, optionally extended by collinear channels.
///
/// With `collinearity` set, the product of `channels` supplies the values of
/// the channels in `collinearity.d` and the remaining ones are derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateConfig {
    pub channels: Vec<MarkovCovariateSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collinearity: Option<Collinearity>,
}

impl CovariateConfig {
    pub fn build(&self) -> Result<MarkovCovariateSpec> {
        let base = if self.channels.len() == 1 {
            self.channels[0].clone()
        } else {
            MarkovCovariateSpec::product(&self.channels)?
        };
        match &self.collinearity {
            None => Ok(base),
            Some(c) => MarkovCovariateSpec::collinear(
                base.states().to_vec(),
                base.generator().clone(),
                c.d.len() + c.b.len(),
                c.clone(),
            ),
        }
    }
}

/// Model family with its ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    Superposition {
        g: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
        bounds: SuperpositionBounds,
    },
    Linear {
        alpha_star: Vec<f64>,
        alpha_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub ladder: Vec<f64>,
    pub reps: usize,
    pub seed_base: u64,
    pub bootstrap: usize,
    /// Horizon of `simulate`; defaults to the largest ladder entry.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mc = MonteCarloConfig::default();
        Self {
            ladder: mc.ladder,
            reps: mc.reps,
            seed_base: mc.seed_base,
            bootstrap: mc.bootstrap,
            horizon: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelConfig,
    pub covariate: CovariateConfig,
    pub penalty: PenaltySpec,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub parsimony: ParsimonyConfig,
    #[serde(default)]
    pub brute_force: BruteForceConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Input(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; a `.json` extension selects JSON, anything else TOML.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("json")) {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn family(&self) -> Result<ModelFamily> {
        let a = self.covariate.build()?.dim();
        match &self.model {
            ModelConfig::Superposition { bounds, .. } => ModelFamily::superposition(a, *bounds),
            ModelConfig::Linear { alpha_max, .. } => ModelFamily::linear(a, *alpha_max),
        }
    }

    /// Parameter that generates the data.
    pub fn theta_sim(&self) -> Result<Vec<f64>> {
        match &self.model {
            ModelConfig::Superposition { g, alpha, beta, .. } => {
                Ok(SuperpositionTruth::new(*g, alpha.clone(), beta.clone())?.theta())
            }
            ModelConfig::Linear { alpha_star, .. } => Ok(alpha_star.clone()),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.run.horizon.unwrap_or_else(|| self.run.ladder.iter().copied().fold(f64::NAN, f64::max))
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let covariate = self.covariate.build()?;
        match &self.model {
            ModelConfig::Superposition { g, alpha, beta, bounds } => Scenario::superposition(
                self.name.clone(),
                covariate,
                SuperpositionTruth::new(*g, alpha.clone(), beta.clone())?,
                *bounds,
                self.penalty.clone(),
            ),
            ModelConfig::Linear { alpha_star, alpha_max } => Scenario::linear(
                self.name.clone(),
                covariate,
                alpha_star.clone(),
                *alpha_max,
                self.penalty.clone(),
                &self.parsimony,
            ),
        }
    }

    pub fn monte_carlo(&self) -> MonteCarloConfig {
        MonteCarloConfig {
            ladder: self.run.ladder.clone(),
            reps: self.run.reps,
            seed_base: self.run.seed_base,
            bootstrap: self.run.bootstrap,
            solver: self.solver,
        }
    }

    /// Re-checks every cross-field invariant.
    pub fn validate(&self) -> Result<()> {
        let covariate = self.covariate.build()?;
        let family = self.family()?;
        family.check_theta(&self.theta_sim()?)?;
        self.penalty.validate_shrinkage()?;
        let dim = family.dim();
        if let Some(e) = self.penalty.entries().iter().find(|e| e.index >= dim) {
            return Err(Error::Input(format!("penalty index {} outside a {dim}-parameter model", e.index)));
        }
        if let ModelConfig::Superposition { .. } = self.model {
            // kappa_g must stay below every alpha weight
            if let Some(g) = self.penalty.entry(0) {
                for j in 0..covariate.dim() {
                    let k = family.alpha_index(j);
                    if let Some(a) = self.penalty.entry(k) {
                        if !(g.kappa < a.kappa) {
                            return Err(Error::Parameter(format!(
                                "kappa_g = {} must be below kappa_alpha_{} = {}",
                                g.kappa,
                                j + 1,
                                a.kappa
                            )));
                        }
                    }
                }
            }
        }
        if self.run.ladder.is_empty() {
            return Err(Error::Input("empty horizon ladder".into()));
        }
        if let Some(t) = self.run.ladder.iter().chain(&self.run.horizon).find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::Parameter(format!("horizon must be positive and finite, got {t}")));
        }
        if self.run.reps == 0 {
            return Err(Error::Input("reps must be positive".into()));
        }
        Ok(())
    }
}
