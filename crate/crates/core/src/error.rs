//! Error type shared by all kernels.

use alloc::string::String;

/// Failures reported by the numerical kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A boundary profile violates positivity, closeness or the endpoint traces.
    #[error("inadmissible profile: {0}")]
    InadmissibleProfile(String),
    /// A shape perturbation does not vanish (with its slope) at the ends of B.
    #[error("shape perturbation violates endpoint traces: {0}")]
    TraceViolation(String),
    /// The grid is too coarse for the requested operator.
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    /// Array sizes do not agree.
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    /// A factorization hit a vanishing pivot.
    #[error("singular system (row {row})")]
    SingularSystem { row: usize },
    /// The Westervelt leading coefficient `1 - 2kp` dropped to the guard level.
    #[error("non-degeneracy violated at step {step}: min(1 - 2kp) = {margin}")]
    NonDegeneracyViolated { step: usize, margin: f64 },
    /// Newton's method did not reach the residual tolerance.
    #[error("Newton iteration diverged at step {step} (residual {residual})")]
    NewtonDiverged { step: usize, residual: f64 },
    /// The adjoint pipeline only supports `beta_a = 1/c`, `gamma_a = 0`.
    #[error("unsupported absorbing coefficients beta_a = {beta_a}, gamma_a = {gamma_a}")]
    UnsupportedAbsorbingCoefficients { beta_a: f64, gamma_a: f64 },
    /// Twenty consecutive line-search trials were rejected.
    #[error("line search stalled at iteration {iteration}")]
    LineSearchStalled { iteration: usize },
    /// A boundary tag that the operation does not understand.
    #[error("unknown edge")]
    UnknownEdge,
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Result alias used throughout the crate.
pub type Result<T> = core::result::Result<T, Error>;
