//! Error type shared by all library modules.

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid grid, geometry, or partition input.
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    /// A coefficient value left the ellipticity band [λ, 1/λ].
    #[error("ellipticity violated: {0}")]
    EllipticityViolation(String),

    /// A parameter is outside its admissible range (s, t, mesh sizes, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Eigendecomposition failed or its invariants do not hold.
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    /// Direct or banded linear solve broke down.
    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    /// Quadrature range insufficient for the requested accuracy.
    #[error("quadrature range too narrow: {0}")]
    QuadratureRange(String),

    /// Root bracketing or iteration failure in a scalar solve.
    #[error("root solve failure: {0}")]
    RootSolve(String),

    /// Two objects built from incompatible grids/windows were combined.
    #[error("provenance mismatch: {0}")]
    ProvenanceMismatch(String),
}
