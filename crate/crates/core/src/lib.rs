//! Gaussian smooth transition vector autoregression.
//!
//! A GSTVAR model mixes `M` linear VAR(p) regimes with transition weights
//! proportional to `α_m` times each regime's stationary density of the last
//! `p` observations. The crate covers the likelihood and simulation,
//! stationarity checks with joint-spectral-radius bounds, two-phase
//! maximum-likelihood estimation, recursive structural analysis
//! (generalized impulse responses and variance decompositions), residual
//! diagnostics and a Monte Carlo study of the estimator.
//!
//! With the default `parallel` feature the data-parallel loops run on the
//! current rayon pool; results are identical for any worker count.

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod optim;
pub mod par;
pub mod seeding;
pub mod stationarity;
pub mod structural;

pub use error::{GstvarError, Result};
pub use estimation::{fit, EstimationConfig, FittedModel};
pub use model::{History, ModelOrder, ParameterVector, RegimeParameters, SeriesMatrix};
pub use stationarity::JsrCertificate;
