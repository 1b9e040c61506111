//! Echo state network forecasting for univariate series, with simple
//! benchmark methods, accuracy metrics and a resumable hyperparameter sweep.

pub mod benchmarks;
pub mod config;
pub mod data;
pub mod error;
pub mod forecaster;
pub mod linalg;
pub mod metrics;
pub mod preprocess;
pub mod readout;
pub mod registry;
pub mod reservoir;
pub mod rng;
pub mod sweep;

pub use error::{Error, ErrorClass, Result};
