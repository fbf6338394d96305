//! The joint model: user-correlation and propagation branches, fusion,
//! training and checkpoints.

mod checkpoint;
mod layers;
mod network;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layers::{
    fuse_and_classify, gcn_layer, gcn_layer_traced, propagation_forward, user_correlation_forward,
    Dropout, FusionParams, FusionTrace, GcnTrace, GraphBranchParams, GraphBranchTrace,
    TreeBatch, TreeBranchParams, TreeBranchTrace,
};
pub use network::{
    mix_seed, Branches, Encoded, EncodedInstance, Featurizer, ForwardTrace, Mode, Model, ModelConfig,
    ModelParams, NUM_CLASSES,
};
pub use train::{evaluate, train, EpochStats, Evaluation, StopReason, TrainConfig, TrainOutcome};

use crate::encoders::EncoderError;
use crate::graphs::GraphError;
use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error("inconsistent inputs: {0}")]
    Mismatch(String),
    #[error("empty {0}")]
    Empty(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
