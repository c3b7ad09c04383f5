//! Desk-scale semantic and channel codec with a prefix-prunable knowledge base.
//!
//! Transmitter: token embedding, a single tanh layer over the sentence rows
//! stacked with the knowledge prefix, and a linear channel encoder whose output
//! is paired into unit-power complex symbols. Receiver: a linear channel
//! decoder and a softmax projection of each token row plus the mean knowledge
//! vector.

mod bleu;
mod loss;
mod matrix;
mod params;
mod pipeline;
mod serial;
mod train;
mod vocab;

use thiserror::Error;

pub use bleu::bleu;
pub use loss::{
    ce_loss, kb_loss, kb_regularizer, mse_loss, total_loss, CrossEntropyMode, LossBreakdown,
    PROB_FLOOR,
};
pub use matrix::Matrix;
pub use params::{CodecDims, CodecParams, KnowledgeBase, ParamGroup, TENSOR_ORDER};
pub use pipeline::{
    channel_decode, channel_encode, decode_received, embed, encode_sentence, prune_features,
    prune_kb, semantic_decode, semantic_encode, Decoded, Encoded, MIN_KB_PREFIX,
};
pub use serial::{
    decode_knowledge, decode_model, encode_knowledge, encode_model, knowledge_blob_len,
    model_blob_len, Blob, KNOWLEDGE_MAGIC, MODEL_MAGIC,
};
pub use train::{
    batch_losses, evaluate, forward_pruned, forward_random_prune, forward_sentence, objective,
    objective_and_gradient, train, train_step, ChannelSpec, Evaluation, ForwardBatch, ForwardTrace,
    StepKind, StepReport, TrainOptions, TrainingSchedule,
};
pub use vocab::{Sentence, Vocabulary, END, PAD, START, TOY_CORPUS, UNKNOWN};

use crate::signal::SignalError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("token id {id} is outside the vocabulary of size {vocab}")]
    UnknownToken { id: u32, vocab: usize },
    #[error("knowledge prefix of {0} vectors is below the minimum of 2")]
    PrefixTooSmall(usize),
    #[error("knowledge base is empty")]
    EmptyKnowledgeBase,
    #[error("prefix size {value} outside [{min}, {max}]")]
    OutOfRange {
        value: usize,
        min: usize,
        max: usize,
    },
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("sentence must contain at least one token")]
    EmptySentence,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid dimensions: {0}")]
    InvalidDims(&'static str),
    #[error("non-finite value in parameters")]
    NonFinite,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("learning rate must be finite and non-negative, got {0}")]
    InvalidLearningRate(f64),
    #[error("malformed blob: {0}")]
    Malformed(&'static str),
    #[error(transparent)]
    Signal(#[from] SignalError),
}
