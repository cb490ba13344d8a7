//! Cross-entropy training: the generative objective and teacher-forced
//! sequence-to-sequence prediction.

pub mod loss;
pub mod train;

pub use loss::{loss_generative, loss_generative_grad, loss_seq2seq, loss_seq2seq_grad, LossReport};
pub use train::{sampled_generative_loss, seq2seq_predict, train_generative, train_seq2seq, LossHistory, TrainConfig};
