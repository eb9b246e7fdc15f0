//! Miniature transformer-encoder text classifier trained from scratch.
//!
//! Token embeddings plus sinusoidal positions feed `n_layers` post-norm
//! encoder blocks (multi-head self-attention, residual, layer norm,
//! feed-forward, residual, layer norm). The final hidden states are
//! mean-pooled over real (non-PAD) positions and mapped to class
//! probabilities by an affine head and a softmax. Gradients are derived by
//! hand and checked against central finite differences.

mod attention;
mod gradcheck;
mod model;
pub mod tensor;
mod train;
mod vocab;

use thiserror::Error;

pub use attention::{attention_weights, multi_head_attention, scaled_dot_attention, AttentionHeads};
pub use gradcheck::{gradient_check, GradientCheckOptions, GradientCheckReport, GradientScope};
pub use model::{AttentionClassifier, CHECKPOINT_KIND, EncoderConfig, HeadInit, TensorInfo};
pub use tensor::Matrix;
pub use train::{train, EpochStats, TrainingConfig, TrainingOutcome};
pub use vocab::{TokenSequence, Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("every key position is masked")]
    AllMasked,
    #[error("text contains no tokens")]
    EmptySequence,
    #[error("token index {index} is outside the vocabulary of {size}")]
    TokenOutOfRange { index: usize, size: usize },
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error("invalid training config: {0}")]
    Training(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("finite-difference step {0} outside [1e-6, 1e-3]")]
    BadEpsilon(f64),
    #[error("label {0} is outside the model's {1} classes")]
    LabelOutOfRange(usize, usize),
    #[error("corpus labels do not match the model's label registry")]
    LabelMismatch,
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
}
