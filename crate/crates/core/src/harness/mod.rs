//! Experiment orchestration: single runs, ensembles, refinement studies,
//! uniqueness twins and parameter checks.

pub mod config;
pub mod experiments;
pub mod fit;
pub mod output;

use thiserror::Error;

pub use config::{Axis, ExperimentConfig, Metric, Quantity};
pub use experiments::{
    check_b2_config, run_convergence, run_ensemble, run_uniqueness, simulate, validate, B2Report,
    ConvergenceReport, EnsembleResult, EnsembleSummary, LevelResult, SimulationResult, UniquenessReport,
    ValidateReport,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot read config {0}")]
    MissingConfig(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Noise(#[from] crate::noise::NoiseError),
    #[error(transparent)]
    Dynamics(#[from] crate::dynamics::DynamicsError),
    #[error(transparent)]
    Integrator(#[from] crate::integrator::IntegratorError),
    #[error(transparent)]
    Diagnostics(#[from] crate::diagnostics::DiagnosticsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// True for errors caused by the invocation rather than the model.
    pub fn is_usage(&self) -> bool {
        matches!(self, HarnessError::Config(_) | HarnessError::MissingConfig(_))
    }
}
