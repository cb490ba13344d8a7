//! Tensors, reverse-mode differentiation, networks and optimization.

pub mod adam;
pub mod checkpoint;
pub mod logsumexp;
pub mod mlp;
pub mod schedule;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use logsumexp::log_sum_exp;
pub use mlp::{Activation, Dense, Mlp, MlpSpec, MlpVars, OutputActivation};
pub use schedule::LrSchedule;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
