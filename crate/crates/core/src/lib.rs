//! Spatio-temporal crop-yield forecasting with structural time series marginals,
//! extreme-value covariates and dynamic copulas.

pub mod bsts;
pub mod clustering;
pub mod copula;
pub mod data;
pub mod error;
pub mod eval;
pub mod forecast;
pub mod gev;
pub mod kalman;
pub mod matrix;
pub mod optim;
pub mod quad;
pub mod scalar;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;
