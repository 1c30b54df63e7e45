//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("unsupported dimension {0} (need 2 or 3)")]
    UnsupportedDimension(usize),
    #[error("shape mismatch: {what}")]
    ShapeMismatch { what: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("metric not positive definite at grid point {point} (smallest eigenvalue {eigenvalue:.3e})")]
    NotPositiveDefinite { point: usize, eigenvalue: f64 },
    #[error("non-finite value in {what} at grid point {point}")]
    NonFinite { what: String, point: usize },
}

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("flow singularity at t = {t:.6}: metric degenerate at grid point {point} (smallest eigenvalue {eigenvalue:.3e})")]
    Singularity { t: f64, point: usize, eigenvalue: f64 },
    #[error("invalid horizon {0}")]
    InvalidHorizon(f64),
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("solution lost positivity at t = {t:.6} (min value {min:.3e}); step size too large")]
    PositivityLoss { t: f64, min: f64 },
    #[error("terminal time {terminal} must lie strictly inside the trajectory horizon {horizon}")]
    BadTerminalTime { terminal: f64, horizon: f64 },
    #[error("initial/terminal datum must be strictly positive (min {0:.3e})")]
    NonPositiveDatum(f64),
    #[error("iteration failed to converge after {iterations} steps (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid Li-Yau parameters: {0}")]
    BadParameters(String),
    #[error("invalid time window: {0}")]
    BadWindow(String),
    #[error("geodesic solver did not converge after {iterations} iterations (gradient norm {gradient:.3e})")]
    GeodesicNoConvergence { iterations: usize, gradient: f64 },
    #[error("initial datum is constant: c(t) degenerates, frequency machinery undefined")]
    DegenerateInitialDatum,
    #[error("eigenvalue iteration failed to converge after {iterations} sweeps (last value {value:.3e})")]
    EigenNoConvergence { iterations: usize, value: f64 },
}
