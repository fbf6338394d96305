//! Dataset schema and I/O, the evaluation protocol, metrics and the
//! synthetic generator.

mod metrics;
mod protocol;
mod schema;
pub mod synth;

pub use metrics::{compute_metrics, MetricsReport};
pub use protocol::{early_cutoff, filter_connected_users, kfold_split, split, Folds};
pub use schema::{
    load_dataset, parse_instances, parse_users, save_dataset, write_instances, write_users,
    Comment, Dataset, Instance, Label, Provenance, UserAction,
};
pub use synth::{generate_synthetic, SynthConfig, SynthTruth};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: comment {comment} has parent {parent} which is not the source or an earlier comment")]
    OrphanParent {
        line: usize,
        comment: String,
        parent: String,
    },
    #[error("line {line}: user {user} has no profile row")]
    MissingProfile { line: usize, user: String },
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("empty {0}")]
    EmptySplit(String),
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
