//! Penalized quasi-maximum likelihood estimation for non-identifiable
//! counting-process intensity models.
//!
//! The crate covers Bridge penalties ([`penalty`]), finite-state Markov
//! covariates ([`covariate`]), exact simulation and likelihood of the counting
//! process ([`pointprocess`]), the zero-pattern enumerating estimator
//! ([`estimator`]), limit-law ingredients and Monte Carlo checks
//! ([`asymptotics`]), and the kernel/projection machinery that identifies the
//! most parsimonious true value of the multicollinear linear model
//! ([`parsimony`]).

pub mod asymptotics;
pub mod config;
pub mod covariate;
pub mod error;
pub mod estimator;
pub mod montecarlo;
pub mod optim;
pub mod parsimony;
pub mod penalty;
pub mod pointprocess;
pub mod stats;

pub use error::{Error, Result};
