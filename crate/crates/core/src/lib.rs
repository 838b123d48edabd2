//! Adaptive borrowing of external control samples for treatment effect
//! estimation in randomized trials.
//!
//! The crate scores each external control by its influence on the
//! trial-control outcome model, fuses a selected subset into a
//! semiparametric estimator of the average treatment effect, and picks the
//! subset size by an estimated bias--variance trade-off. A synthetic-data
//! generator and a Monte Carlo harness reproduce the benchmark scenarios.
//!
//! The numerical core is generic over the scalar type (`f32`/`f64`) through
//! the [`scalar::Real`] trait; the aliases below fix `f64` for callers that
//! do not need the genericity.

pub mod bench;
pub mod data;
pub mod error;
pub mod estimators;
pub mod influence;
pub mod linalg;
pub mod models;
pub mod nuisance;
pub mod scalar;
pub mod selection;
pub mod simgen;

pub use error::{Error, Result};
pub use scalar::Real;

/// `f64` aliases for the main domain types.
pub type Sample64 = data::Sample<f64>;
pub type Trial64 = data::TrialDataset<f64>;
pub type Pool64 = data::ExternalPool<f64>;
pub type Ridge64 = models::RidgeModel<f64>;
pub type Logistic64 = models::LogisticModel<f64>;
pub type Ranking64 = influence::InfluenceRanking<f64>;
