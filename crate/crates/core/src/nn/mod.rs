//! The model family: a residual convolutional protein branch, a
//! convolutional or graph drug branch, a shared dense trunk and one head per
//! task.

mod checkpoint;
mod input;
pub mod layers;
mod model;
mod spec;


pub use checkpoint::{read_blocks, write_blocks, Checkpoint, CheckpointManifest, FORMAT_VERSION};
pub use input::{DrugInput, Encoder, ModelInput};
pub use layers::{gcn_layer, gin_layer, global_max_pool, residual_conv_block};
pub use model::{build_model, build_singletask_baseline, BaselineKind, Model};
pub use spec::{DrugBranch, ModelSpec, MODEL_NAMES};

use thiserror::Error;

use crate::mol::{EncodeError, SmilesError, VocabError};
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum NnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Smiles(#[from] SmilesError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error("graph has no atoms")]
    EmptyGraph,
    #[error("edge {edge:?} out of range for {n} nodes")]
    EdgeOutOfRange { edge: (usize, usize), n: usize },
    #[error("cannot pool over zero positions")]
    EmptyPool,
    #[error("empty batch")]
    EmptyBatch,
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("drug encoding does not match the model's drug branch")]
    BranchMismatch,
    #[error("parameters do not match the model layout: {0}")]
    ParameterMismatch(String),
    #[error("vocabulary sizes {found:?} do not match the checkpoint's {expected:?}")]
    VocabMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
