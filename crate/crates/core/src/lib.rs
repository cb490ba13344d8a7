//! Alternator sequence models: a self-contained reverse-mode differentiation
//! core, the alternator's generative process and training objectives,
//! synthetic Lorenz / spike-train data, forecast metrics and an experiment
//! harness.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use model::{Alternator, AlternatorConfig, ModelParams, NetworkConfig, Trajectory};
pub use numerics::Tensor;
