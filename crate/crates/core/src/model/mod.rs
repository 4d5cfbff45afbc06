//! The SE-VGG + LSTM network: configuration, assembly, end-to-end
//! forward/backward and checkpoints.

use thiserror::Error;

use crate::kv::KvError;
use crate::nn::NnError;

pub mod checkpoint;
pub mod config;
pub mod graph;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ConvPart, ModelConfig};
pub use graph::{argmax_rows, ForwardPass, Layer, ModelGraph};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input length {input_len} does not survive five 2× pools (need ≥ {min})")]
    InputTooShort { input_len: usize, min: usize },
    #[error("expected batch of shape B×1×{expected}, got {actual:?}")]
    InputShape { expected: usize, actual: Vec<usize> },
    #[error(transparent)]
    Layer(NnError),
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("not a checkpoint (bad magic bytes)")]
    BadMagic,
    #[error("checkpoint format version {found}, this build reads version {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint checksum failure: stored {stored:08x}, computed {actual:08x}")]
    ChecksumMismatch { stored: u32, actual: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
