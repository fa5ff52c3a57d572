use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0}")]
    Invalid(String),
    #[error("species {0} has no cooling transition (wavelength/linewidth) configured")]
    MissingTransition(String),
    #[error("species {species} is unstable: q = {q:.4} >= 0.9")]
    Unstable { species: String, q: f64 },
    #[error("species {species} is radially unbound: omega_rho^2 = {radial_sq:.4e} <= 0")]
    RadiallyUnbound { species: String, radial_sq: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForceError {
    #[error("particles {i} and {j} are {distance:.3e} m apart (minimum 1 nm); integration has broken down")]
    CoincidentParticles { i: usize, j: usize, distance: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("step size {dt:.3e} s fell below the minimum {dt_min:.3e} s at t = {t:.6e} s")]
    StepTooSmall { t: f64, dt: f64, dt_min: f64 },
    #[error("non-finite state at t = {t:.6e} s (particle {particle})")]
    NonFinite { t: f64, particle: usize },
    #[error(transparent)]
    Force(#[from] ForceError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("window spans {periods} rf periods, at least {required} are needed")]
    WindowTooShort { periods: usize, required: usize },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}: {key}: {message}")]
    Key { key: String, line: usize, message: String },
    #[error("missing [{0}]")]
    MissingSection(String),
    #[error("{0}")]
    Syntax(String),
    #[error("{0}")]
    Invalid(String),
    #[error("unknown preset '{name}'; available: {available}")]
    UnknownPreset { name: String, available: String },
    #[error("cannot place {count} particles with {min_separation:.1e} m separation in the placement region; use a larger region")]
    Placement { count: usize, min_separation: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Failure of a full simulation run.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("unstable configuration:\n{0}")]
    Unstable(String),
}
