pub mod backbone;
pub mod config;
pub mod confidence;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod exceptions;
pub mod experiments;
pub mod linalg;
pub mod recal;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use scalar::{ExactField, Scalar};
