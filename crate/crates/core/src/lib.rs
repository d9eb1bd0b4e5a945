//! Maximum-likelihood period estimation for short periodic pulse trains in
//! white Gaussian noise, with Fisher information and Cramér-Rao bounds for
//! the known-shape and unknown-shape pulse models.

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod formats;
pub mod montecarlo;
pub mod signal_model;

pub use error::{Error, Result};
