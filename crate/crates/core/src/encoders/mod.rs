//! Leaf encoders: user-profile MLP and the GRU text encoder with its
//! vocabulary, tokenizer and pretrained-vector reader.

mod glove;
mod gru;
mod text;
mod users;

pub use glove::{load_embeddings, parse_embeddings, EmbeddingTable};
pub use gru::{gru_backward, gru_forward, gru_forward_batch, GruGrads, GruParams, GruTrace};
pub use text::{
    build_vocab, tokenize, tokenize_and_pad, TokenSequence, Vocabulary, PAD, PAD_TOKEN, UNK,
    UNK_TOKEN, URL_TOKEN, USER_TOKEN,
};
pub use users::{
    encode_users, extract_user_features, FeatureNormalizer, UserEncoderParams, UserEncoderTrace,
    UserProfile, USER_FEATURE_DIM,
};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("invalid user profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("embedding file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding file line {line}: expected {expected} values, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid vocabulary: {0}")]
    Vocabulary(String),
    #[error("trace does not match: {0}")]
    TraceMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
