//! Latent-variable linear-Gaussian state-space modeling for multimodal
//! time series.
//!
//! The crate covers the full pipeline from raw sensor tables to fitted
//! models and synchrony analyses:
//!
//! - [`timeseries`]: CSV ingestion, uniform resampling, standardization,
//!   and interleaved timestep restructuring.
//! - [`features`]: AOI gaze binning, stationary/transition gaze entropy,
//!   IMU activity indicators, and feature-table assembly.
//! - [`changepoint`]: product-partition Bayesian change-point analysis of
//!   heart rate and rare-event segmentation.
//! - [`model`]: state-space model structure with free/fixed/shared
//!   parameter constraints.
//! - [`kalman`]: exact filtering, smoothing, likelihood, and simulation.
//! - [`estimation`]: EM maximum likelihood with numerical-Hessian standard
//!   errors and -2LL model comparison.
//! - [`sync`]: cross-correlation, windowed cross-correlation, and
//!   peak-picking.
//! - [`analysis`]: rolling-window refits, segmented fits, latent
//!   association, and per-participant summaries.
//! - [`oracle`]: slow, independent reference implementations used by the
//!   test suites.

pub mod analysis;
pub mod changepoint;
pub mod estimation;
pub mod error;
pub mod features;
pub mod kalman;
mod linalg;
pub mod model;
pub mod oracle;
pub mod sync;
pub mod synthetic;
pub mod timeseries;

pub use error::{Error, ErrorCategory, Result};
pub use linalg::Fnv1a;
