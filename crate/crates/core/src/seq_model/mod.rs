//! Small transformer encoder–decoder with explicit masks and greedy decoding.

mod config;
pub mod layers;
mod masks;
mod transformer;
mod vocab;

pub use config::ModelConfig;
pub use layers::Dropout;
pub use masks::{AttentionMask, MaskKind};
pub use transformer::{argmax, decode_greedy, Decoder, Embeddings, Encoder, EncoderOutput, TokenSequence};
pub use vocab::{Vocab, SPECIALS};
pub use vocab::{BOS, EOS, PAD, SEP, SYS, UNK, USR};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("vocabulary: {0}")]
    Vocab(String),
    #[error("token id {id} outside vocabulary of {vocab}")]
    Token { id: usize, vocab: usize },
    #[error("sequence of {len} exceeds maximum {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("shape: {0}")]
    Shape(String),
}
