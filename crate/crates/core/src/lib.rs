//! Multi-fidelity Kriging for scenario-based safety evaluation.
//!
//! Results from several fidelity levels (historical data, simulation, track
//! tests, on-road tests) are fused into one Gaussian-random-field response
//! surface by stacking independent Kriging layers: layer 1 models the lowest
//! fidelity and every layer above it models the difference to the level
//! below. The fused surface feeds a Monte Carlo estimate of the probability
//! of a safety-critical event and an information-gain-per-cost rule for
//! choosing the next experiment.

pub mod config;
pub mod doe;
pub mod error;
pub mod experiments;
pub mod io;
pub mod kriging;
pub mod multifidelity;
pub mod rare_event;
pub mod rng;
pub mod scenarios;

pub use error::{Error, Result};
pub use kriging::{
    fit_mle, Bounds, Dataset, DesignPoint, FitConfig, KernelParams, KrigingModel, Prediction,
};
pub use multifidelity::{fit_multifidelity, FidelityLevel, MultiFidelityDataset, MultiFidelityModel};
pub use rare_event::{event_probability, Direction, EnvironmentDistribution, EventSpec, ProbabilityEstimate};
pub use doe::{select_next, CandidateSet, DesignChoice, IgBudget, LevelCosts};
