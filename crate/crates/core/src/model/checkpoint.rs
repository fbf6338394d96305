use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{Featurizer, Model};
use super::ModelError;
use crate::numerics::OptimizerState;

pub const CHECKPOINT_FORMAT: &str = "report-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training or evaluate: weights, optimizer
/// moments, fitted featurizer and the run configuration that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config_hash: String,
    /// The full run configuration, kept verbatim so a run can be replayed.
    pub run_config: serde_json::Value,
    pub featurizer: Featurizer,
    pub model: Model,
    pub optimizer: OptimizerState,
}

impl Checkpoint {
    pub fn new(
        model: Model,
        optimizer: OptimizerState,
        featurizer: Featurizer,
        run_config: serde_json::Value,
        config_hash: String,
        seed: u64,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed,
            config_hash,
            run_config,
            featurizer,
            model,
            optimizer,
        }
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ModelError> {
        #[derive(Deserialize)]
        struct Header {
            format: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(s)?;
        Self::check_header(&header.format, header.version)?;
        let ckpt: Checkpoint = serde_json::from_str(s)?;
        ckpt.validate()?;
        Ok(ckpt)
    }

    fn check_header(format: &str, version: u32) -> Result<(), ModelError> {
        if format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unknown format {format:?}")));
        }
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        Ok(())
    }

    /// Shape consistency between config, vocabulary, weights and optimizer.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fresh = Model::new(self.model.config.clone(), self.featurizer.vocab.len(), 0)?;
        let want: Vec<_> = fresh.params.tensors().iter().map(|t| t.shape()).collect();
        let have: Vec<_> = self.model.params.tensors().iter().map(|t| t.shape()).collect();
        if want != have {
            return Err(ModelError::Checkpoint("parameter shapes disagree with the config".into()));
        }
        let m: Vec<_> = self.optimizer.first_moment.iter().map(|t| t.shape()).collect();
        let v: Vec<_> = self.optimizer.second_moment.iter().map(|t| t.shape()).collect();
        if m != have || v != have {
            return Err(ModelError::Checkpoint("optimizer state does not match the parameters".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let format = value.get("format").and_then(|v| v.as_str()).unwrap_or_default();
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        Self::check_header(format, version)?;
        let ckpt: Checkpoint = serde_json::from_value(value)?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}
