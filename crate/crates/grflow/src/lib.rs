//! Numerical laboratory for the generalized Ricci flow: the coupled evolution
//! of a metric and a closed three-form on discretized closed manifolds,
//! together with forward/backward heat solvers and verifiers for the
//! associated gradient estimates, Harnack inequalities and parabolic-frequency
//! monotonicity.
//!
//! Two backends are available: a periodic finite-difference grid over the
//! n-torus ([`geometry`], [`flow`], [`heat`]) and an exact ODE reduction on
//! 3-dimensional unimodular Lie groups in a Milnor frame ([`homogeneous`]).

pub mod errors;
pub mod estimates;
pub mod fd;
pub mod field;
pub mod flow;
pub mod frequency;
pub mod geodesic;
pub mod geometry;
pub mod grid;
pub mod heat;
pub mod homogeneous;
pub mod linalg;
pub mod report;
pub mod run;
pub mod scenario;
pub mod synth;
pub mod trajectory_io;

pub use errors::{EstimateError, FlowError, GeometryError, SolverError};
pub use grid::GridSpec;
