//! Gradual machine learning for unsupervised entity resolution.
//!
//! Pipeline: [`ingest`] → [`features`] → [`easy_label`] → [`inference`] → [`evaluation`].
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix `f64`
//! as the default.

pub mod easy_label;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod inference;
pub mod influence;
pub mod pipeline;
pub mod scalar;
pub mod similarity;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision factor graph, the default engine.
pub type FactorGraphF64 = inference::FactorGraph<f64>;
pub type FactorGraphF32 = inference::FactorGraph<f32>;
pub type RegressionFitF64 = influence::RegressionFit<f64>;
pub type SigmoidModelF64 = influence::SigmoidModel<f64>;
