//! Causal language model abstraction, the toy reference model, adapter
//! fine-tuning, and an out-of-process plugin bridge.

pub mod autodiff;
mod encode;
mod lora;
mod plugin;
mod table;
pub mod tensor;
mod tokenizer;
pub mod toy;
mod train;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use encode::{encode, pad_batch, EncodeError, TokenizedSequence, DEFAULT_MAX_LEN};
pub use lora::{LoraAdapter, LoraConfig, LoraPair, ADAPTER_FORMAT};
pub use plugin::{PluginBackend, PluginConfig};
pub use table::TableBackend;
pub use tensor::Matrix;
pub use tokenizer::{ChatTokenizer, CharTokenizer};
pub use toy::{KvCache, ToyConfig, ToyModel};
pub use train::{adapter_params, finetune, lm_loss_gradients, lr_at, mean_loss, CheckpointDir, Schedule, TrainConfig, TrainLog};

pub mod tokens {
    pub use super::tokenizer::{ASSISTANT, BOS, END, EOS, NO, PAD, SYSTEM, UNK, USER, YES};
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("sequence is empty or all padding")]
    EmptySequence,
    #[error("sequence has no loss-masked positions")]
    NoSupervisedPositions,
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty training dataset")]
    EmptyDataset,
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad artifact: {0}")]
    Format(String),
    #[error("plugin: {0}")]
    Plugin(String),
    #[error("{0} is not supported by this backend")]
    Unsupported(&'static str),
}

/// Final-layer hidden states (`T × d`) and the next-token distribution at
/// the last attended position.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub hidden: Matrix,
    pub next_token: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub steps: usize,
    pub epoch_train_loss: Vec<f64>,
    pub epoch_val_loss: Vec<f64>,
    /// Adapter written by the last epoch, when checkpointing.
    pub adapter_path: Option<PathBuf>,
}

pub trait Backend: Send + Sync {
    fn name(&self) -> String;
    fn hidden_dim(&self) -> usize;
    fn max_len(&self) -> usize;
    fn tokenizer(&self) -> &dyn ChatTokenizer;
    fn forward(&self, seq: &TokenizedSequence) -> Result<ForwardOutput, BackendError>;
    /// Greedy continuation; stops at a stop token or after `max_new_tokens`.
    fn generate(&self, seq: &TokenizedSequence, max_new_tokens: usize) -> Result<String, BackendError>;
    /// Mean negative log-likelihood over loss-masked positions.
    fn lm_loss(&self, seq: &TokenizedSequence) -> Result<f64, BackendError>;
    /// Digest of every parameter this instance computes with.
    fn parameter_checksum(&self) -> Result<String, BackendError>;
    /// Trains a fresh adapter over this backend's frozen weights.
    fn finetune(
        &self,
        train: &[TokenizedSequence],
        validation: &[TokenizedSequence],
        lora: &LoraConfig,
        config: &TrainConfig,
        checkpoints: Option<&Path>,
    ) -> Result<FinetuneReport, BackendError>;
    /// The same backbone with a saved adapter applied.
    fn with_adapter(&self, adapter_path: &Path) -> Result<Box<dyn Backend>, BackendError>;
}

/// Attended token ids, after checking the sequence is usable.
pub(crate) fn attended_ids(seq: &TokenizedSequence, vocab: usize) -> Result<&[u32], BackendError> {
    if seq.attention_mask.len() != seq.token_ids.len() || seq.loss_mask.len() != seq.token_ids.len() {
        return Err(EncodeError::Malformed("mask lengths differ from token ids".into()).into());
    }
    let ids = seq.valid_ids();
    if ids.is_empty() {
        return Err(BackendError::EmptySequence);
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= vocab) {
        return Err(BackendError::TokenOutOfRange { id, vocab });
    }
    Ok(ids)
}

/// Mean NLL of loss-masked tokens given per-position logits.
pub(crate) fn masked_nll(logits: &Matrix, ids: &[u32], loss_mask: &[u8]) -> Result<f64, BackendError> {
    let targets = toy::next_token_targets(ids, loss_mask);
    if targets.is_empty() {
        return Err(BackendError::NoSupervisedPositions);
    }
    let total: f64 = targets
        .iter()
        .map(|&(row, tok)| tensor::log_sum_exp(logits.row(row)) - logits.get(row, tok))
        .sum();
    let loss = total / targets.len() as f64;
    if !loss.is_finite() {
        return Err(BackendError::NumericFailure(format!("lm loss {loss}")));
    }
    Ok(loss)
}

/// The toy transformer with an optional frozen adapter.
#[derive(Clone)]
pub struct ToyBackend {
    model: Arc<ToyModel>,
    adapter: Option<Arc<LoraAdapter>>,
    tokenizer: CharTokenizer,
    max_len: usize,
}

impl ToyBackend {
    pub fn new(config: ToyConfig) -> Result<Self, BackendError> {
        config.validate().map_err(BackendError::Config)?;
        Ok(Self::from_model(ToyModel::new(config)))
    }

    pub fn from_model(model: ToyModel) -> Self {
        ToyBackend {
            model: Arc::new(model),
            adapter: None,
            tokenizer: CharTokenizer::new(),
            max_len: DEFAULT_MAX_LEN,
        }
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = max_len;
        self
    }

    pub fn with_lora(&self, adapter: LoraAdapter) -> Self {
        ToyBackend {
            adapter: Some(Arc::new(adapter)),
            ..self.clone()
        }
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }

    pub fn adapter(&self) -> Option<&LoraAdapter> {
        self.adapter.as_deref()
    }

    fn vocab(&self) -> usize {
        self.model.config.vocab_size
    }

    /// Greedy decoding returning raw ids, stop token included if reached.
    pub fn generate_ids(&self, seq: &TokenizedSequence, max_new_tokens: usize) -> Result<Vec<u32>, BackendError> {
        let ids = attended_ids(seq, self.vocab())?;
        let stops = self.tokenizer.stop_ids();
        let mut cache = KvCache::default();
        let mut hidden = self.model.extend(self.adapter(), ids, &mut cache);
        let mut out = Vec::new();
        while out.len() < max_new_tokens && cache.len() < self.max_len {
            let logits = self.model.logits(&Matrix::row_vector(hidden.row(hidden.rows - 1)));
            let next = argmax(&logits.data) as u32;
            out.push(next);
            if stops.contains(&next) {
                break;
            }
            hidden = self.model.extend(self.adapter(), &[next], &mut cache);
        }
        Ok(out)
    }

    /// Trains an adapter and returns it alongside the log.
    pub fn train_adapter(
        &self,
        train: &[TokenizedSequence],
        validation: &[TokenizedSequence],
        lora: &LoraConfig,
        config: &TrainConfig,
        checkpoints: Option<&CheckpointDir>,
    ) -> Result<(LoraAdapter, TrainLog), BackendError> {
        finetune(&self.model, train, validation, lora, config, checkpoints)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    // First maximum wins, so ties resolve to the lowest id.
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Backend for ToyBackend {
    fn name(&self) -> String {
        "toy".into()
    }

    fn hidden_dim(&self) -> usize {
        self.model.hidden_dim()
    }

    fn max_len(&self) -> usize {
        self.max_len
    }

    fn tokenizer(&self) -> &dyn ChatTokenizer {
        &self.tokenizer
    }

    fn forward(&self, seq: &TokenizedSequence) -> Result<ForwardOutput, BackendError> {
        let ids = attended_ids(seq, self.vocab())?;
        let hidden = self.model.extend(self.adapter(), ids, &mut KvCache::default());
        let last = Matrix::row_vector(hidden.row(hidden.rows - 1));
        let next_token = tensor::softmax(&self.model.logits(&last).data);
        if !hidden.is_finite() || next_token.iter().any(|p| !p.is_finite()) {
            return Err(BackendError::NumericFailure("non-finite forward output".into()));
        }
        Ok(ForwardOutput { hidden, next_token })
    }

    fn generate(&self, seq: &TokenizedSequence, max_new_tokens: usize) -> Result<String, BackendError> {
        let ids = self.generate_ids(seq, max_new_tokens)?;
        Ok(self.tokenizer.decode(&ids))
    }

    fn lm_loss(&self, seq: &TokenizedSequence) -> Result<f64, BackendError> {
        let ids = attended_ids(seq, self.vocab())?;
        let hidden = self.model.extend(self.adapter(), ids, &mut KvCache::default());
        masked_nll(&self.model.logits(&hidden), ids, &seq.loss_mask[..ids.len()])
    }

    fn parameter_checksum(&self) -> Result<String, BackendError> {
        Ok(self.model.checksum(self.adapter()))
    }

    fn finetune(
        &self,
        train: &[TokenizedSequence],
        validation: &[TokenizedSequence],
        lora: &LoraConfig,
        config: &TrainConfig,
        checkpoints: Option<&Path>,
    ) -> Result<FinetuneReport, BackendError> {
        let dir = checkpoints.map(CheckpointDir::new);
        let (adapter, log) = self.train_adapter(train, validation, lora, config, dir.as_ref())?;
        let adapter_path = match &dir {
            Some(dir) => {
                let path = dir.latest_adapter(log.epochs_completed);
                if config.epochs == 0 {
                    adapter.save(&path)?;
                }
                Some(path)
            }
            None => None,
        };
        Ok(FinetuneReport {
            steps: log.steps,
            epoch_train_loss: log.epoch_train_loss,
            epoch_val_loss: log.epoch_val_loss,
            adapter_path,
        })
    }

    fn with_adapter(&self, adapter_path: &Path) -> Result<Box<dyn Backend>, BackendError> {
        let adapter = LoraAdapter::load(adapter_path)?;
        let targets = self.model.lora_targets();
        for (name, pair) in &adapter.modules {
            let Some((_, d_out, d_in)) = targets.iter().find(|(n, ..)| n == name) else {
                return Err(BackendError::Format(format!("adapter targets unknown module {name}")));
            };
            if pair.a.cols != *d_in || pair.b.rows != *d_out {
                return Err(BackendError::Format(format!("adapter module {name} does not fit the model")));
            }
        }
        Ok(Box::new(self.with_lora(adapter)))
    }
}
