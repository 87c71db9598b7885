//! Exact simulation and persistence-exponent estimation for integrated
//! fractional Brownian motion.
//!
//! The process is stationarized by the Lamperti transform, its correlation is
//! sampled on a uniform grid, and the Toeplitz correlation matrix is factored
//! by a generalized Schur recursion whose Cholesky rows drive sequential
//! conditional sampling of the stationary sequence. Survival of the sequence
//! above a small threshold yields the persistence exponent through a
//! maximum-likelihood fit of truncated-exponential dwell times.

pub mod cache;
pub mod estimate;
pub mod model;
pub mod quad;
pub mod scalar;
pub mod simulate;
pub mod toeplitz;

pub use scalar::{DoubleDouble, Scalar};

/// Default working precision of the pipeline.
pub type Real = f64;
/// Compensated precision used when the recursion exhausts `f64`.
pub type Extended = DoubleDouble;

/// Version string embedded in caches, record files, and CLI output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
