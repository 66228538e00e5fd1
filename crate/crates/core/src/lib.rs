//! Multifractal detrending moving-average cross-correlation analysis (MF-X-DMA).
//!
//! The crate covers the whole analysis chain for a pair of price series:
//!
//! - [`series`]: CSV ingestion, date alignment and log returns.
//! - [`stats`]: the `Q_cc(m)` cross-correlation test, χ² quantiles and
//!   polynomial least squares with coefficient diagnostics.
//! - [`dma`]: moving-average detrending, the bivariate fluctuation surface
//!   `F_xy(q, s)` and the generalized Hurst exponents `H_xy(q)`.
//! - [`multifractal`]: mass exponents, singularity spectrum, singularity
//!   width and the quadratic `τ(q)` nonlinearity test.
//! - [`surrogate`]: IAAFT surrogates and the three-scheme test for intrinsic
//!   joint multifractality.
//! - [`synth`]: fractional Gaussian noise and binomial cascades with known
//!   scaling, used as oracles.
//! - [`pipeline`]: run configuration, end-to-end orchestration, report and
//!   plot-data emission, and the command line front end.

pub mod dma;
pub mod error;
pub mod multifractal;
pub mod pipeline;
pub mod series;
pub mod stats;
pub mod surrogate;
pub mod synth;

pub use error::{Error, Result};
