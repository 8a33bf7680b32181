//! Response stabilization: forced-conclusion decoding and classification
//! heads over a frozen backbone.

mod contrastive;
mod forced;
mod head;
mod train;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use contrastive::{
    joint_loss, l2_normalize, similarity_matrix, supcon_loss, supcon_loss_and_grad, ContrastiveConfig,
};
pub use forced::{decide, forced_conclusion, ForcedConfig, ForcedOutcome, LabelTokenSets, NO_VARIANTS, YES_VARIANTS};
pub use head::{
    bce_loss, head_forward, mean_bce, mean_pool, predict_head, project, sigmoid, HeadParams, DEFAULT_HEAD_DROPOUT,
};
pub use train::{
    head_accuracy, head_loss_and_grads, pooled_embeddings, train_head, train_head_on_embeddings, HeadGradients,
    HeadObjective, HeadTrainConfig, HeadTrainLog,
};

use crate::backend::BackendError;
use crate::prompting::PromptError;

#[derive(Debug, thiserror::Error)]
pub enum StabilizeError {
    #[error("attention mask has no attended position")]
    AllPadding,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{embeddings} embeddings but {labels} labels")]
    BatchMismatch { embeddings: usize, labels: usize },
    #[error("no anchor in the batch has a positive")]
    DegenerateBatch,
    #[error("embedding {0} is the zero vector")]
    ZeroEmbedding(usize),
    #[error("invalid label token sets: {0}")]
    LabelTokens(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("backbone parameters changed during head training ({before} -> {after})")]
    BackboneModified { before: String, after: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Written next to trained head parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadManifest {
    pub objective: HeadObjective,
    pub contrastive: ContrastiveConfig,
    pub dropout: f64,
    /// `base` or the run id of the adapter the backbone carries.
    pub backbone: String,
    pub backbone_checksum: String,
    pub adapter: Option<PathBuf>,
    pub seed: u64,
    pub log: HeadTrainLog,
}
