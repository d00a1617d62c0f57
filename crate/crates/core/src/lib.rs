//! Equality-of-covariance-functions (ECF) testing for functional data sampled
//! on a common grid.
//!
//! The crate computes the L²-norm statistic
//!
//! ```text
//! T_n = Σ_i (n_i − 1) ∬ [γ̂_i(s,t) − γ̂(s,t)]² ds dt
//! ```
//!
//! and calibrates it three ways: a Welch–Satterthwaite `β χ²_d` approximation
//! with plug-in ("naive") or bias-reduced trace estimates, and a random
//! permutation of the pooled subject-effect residuals. Around the test sit an
//! asymptotic power calculator ([`asympower`]), a synthetic data generator
//! ([`simgen`]), a Monte Carlo size/power driver ([`harness`]) and CSV/JSON
//! I/O ([`dataio`]).
//!
//! All integrals are weighted sums over the [`Grid`] quadrature weights.

pub mod asympower;
pub mod dataio;
pub mod ecftest;
pub mod error;
pub mod estim;
pub mod grid;
pub mod harness;
pub mod seed;
pub mod simgen;

pub use error::{Error, Result};
pub use grid::{CovSurface, Dataset, GroupData, Grid};
