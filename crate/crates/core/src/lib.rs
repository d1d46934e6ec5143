//! Identification of autonomous stochastic switched linear systems
//!
//! ```text
//!     x_{t+1} = A_{s_t} x_t + w_t,    s_t i.i.d. with P(s_t = i) = p_i
//! ```
//!
//! by switched least squares: each mode's matrix is fitted from the pairs
//! `(x_t, x_{t+1})` observed while that mode was active, either in one batch
//! solve or recursively through rank-one updates of the inverse Gram matrix.
//!
//! The crate is split into
//! - [`matops`]: small dense kernels (eigen extremes, spectral radius, Kronecker
//!   products, Sherman-Morrison updates),
//! - [`model`]: systems, noise processes, simulation and stability margins,
//! - [`estimator`]: batch and recursive switched least squares,
//! - [`analysis`]: error metrics, convergence bounds, rate fits and
//!   trajectory diagnostics,
//! - [`harness`]: experiment configuration, seeded parallel Monte Carlo and
//!   artifact emission used by the `swsysid` binary.

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod matops;
pub mod model;
pub mod selftest;

pub use error::{Error, Result};
pub use estimator::{EstimatorState, ModeEstimate, ModeStatus};
pub use matops::Matrix;
pub use model::{NoiseKind, NoiseModel, SwitchedSystem, Trajectory};
