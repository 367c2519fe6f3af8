//! Adversarially learned primal-dual reconstruction for parallel-beam CT,
//! at desk scale.

pub mod adam;
pub mod check;
pub mod critic;
pub mod data;
pub mod error;
pub mod fsio;
pub mod kernels;
pub mod lpd;
pub mod metrics;
pub mod nn;
pub mod seeds;
pub mod tape;
pub mod tomo;
pub mod tensor;
pub mod training;
pub mod variational;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
