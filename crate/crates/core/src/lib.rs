//! Gradient testing and gradient estimation for smooth functions that can only
//! be accessed through a comparison oracle.
//!
//! The oracle answers "which of two points has the larger value" and nothing
//! else. Everything downstream is built on [`dp::dp`], the one-query directional
//! preference primitive:
//!
//! - [`testing`]: decide whether the normalized gradient is close to a given
//!   direction (randomized constant-query tester and a deterministic linear-query
//!   tester).
//! - [`estimation`]: recover the normalized gradient to a requested precision.
//! - [`quantumsim`]: a statevector simulation of the Fourier-transform based
//!   estimator at small dimension and grid size.
//! - [`experiments`]: seeded sweeps, success-rate summaries and scaling fits.
//!
//! Ground-truth gradients live behind [`functions::GradientHandle`] and are used
//! only by harness-side verification.

pub mod comparator;
pub mod dp;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod functions;
pub mod geometry;
pub mod quantumsim;
pub mod stats;
pub mod testing;

pub use comparator::{ComparisonOracle, Sign, TiePolicy};
pub use dp::{dp, DpVerdict, Preference};
pub use error::{Error, Result};
pub use estimation::{estimate, estimate_constant, EstimateResult};
pub use functions::{make_hyperplane, make_quadratic, FunctionModel, HyperplaneInstance};
pub use geometry::{OrthonormalFrame, Reflector, UnitVector};
pub use testing::{test_deterministic, test_randomized, TestAnswer, TestParams, TestVerdict};
