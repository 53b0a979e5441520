//! Recognition networks and their checkpoints.

mod checkpoint;
mod sentence;
mod word;

pub use checkpoint::{Checkpoint, CheckpointMeta, LoadMode};
pub use sentence::{argmax_path, SentenceModel, SentenceModelConfig, StBlockConfig, BLANK};
pub use word::{
    Backend, FrontendConfig, LayerId, ResNetConfig, RnnConfig, TemporalConvConfig, WordModel, WordModelConfig,
    WordOutput,
};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::nn::Parameterized;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("input shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint incompatible with model: {0}")]
    ConfigMismatch(String),
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
}

/// A parameterized network with a stable configuration identity.
pub trait Network: Parameterized {
    /// Digest of the full architecture configuration.
    fn config_hash(&self) -> String;
    /// Digest of the configuration fields that determine frontend shapes.
    fn frontend_hash(&self) -> String;
}

/// Short hex SHA-256 of the canonical JSON encoding.
pub fn config_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(&Sha256::digest(&json)[..8])
}

/// Prefix shared by every frontend parameter name.
pub const FRONTEND_PREFIX: &str = "frontend.";
