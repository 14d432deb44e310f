//! Numerical core for fractional conductivity operators on truncated grids.
//!
//! The library realizes the operator (−∇·σ∇)^s three ways — spectral power,
//! heat-semigroup quadrature, and the weighted half-space extension — and
//! builds on them: exterior Dirichlet-to-Neumann maps on a measurement
//! window, quadratic-form monotonicity comparisons, localized potentials via
//! generalized eigenvalue optimization, Runge-type least-squares
//! approximation, and pixel-wise monotonicity reconstruction of inclusions.

pub mod domain;
pub mod error;
pub mod extension;
pub mod exterior;
mod linalg;
pub mod monotonicity;
pub mod reconstruct;
pub mod runge;
pub mod scenarios;
pub mod spectral;
mod util;

pub use error::{CoreError, Result};
pub use linalg::{Matrix, Vector};
pub use util::{fnv1a64, fnv1a64_f64};
