//! Adapter fine-tuning on the toy model: AdamW, linear warmup/decay,
//! gradient accumulation, per-epoch checkpoints.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::autodiff::Graph;
use super::encode::TokenizedSequence;
use super::lora::{LoraAdapter, LoraConfig};
use super::tensor::Matrix;
use super::toy::{next_token_targets, KvCache, TapeAdapter, ToyModel};
use super::{attended_ids, masked_nll, BackendError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Linear warmup, then linear decay to zero.
    #[default]
    Linear,
    /// Linear warmup, then flat.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_accum: usize,
    pub learning_rate: f64,
    pub warmup_ratio: f64,
    pub schedule: Schedule,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            batch_size: 2,
            grad_accum: 4,
            learning_rate: 1e-4,
            warmup_ratio: 0.1,
            schedule: Schedule::Linear,
            weight_decay: 0.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 || self.grad_accum == 0 {
            return Err("batch_size and grad_accum must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return Err(format!("warmup_ratio {} outside [0, 1]", self.warmup_ratio));
        }
        if self.weight_decay < 0.0 {
            return Err("weight_decay must be non-negative".into());
        }
        Ok(())
    }

    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.grad_accum
    }

    pub fn steps_per_epoch(&self, n_examples: usize) -> usize {
        n_examples.div_ceil(self.effective_batch())
    }
}

/// Learning rate for optimizer step `step` (0-based) of `total`. Warmup
/// covers `ceil(ratio·total)` steps starting from zero.
pub fn lr_at(step: usize, total: usize, config: &TrainConfig) -> f64 {
    let warmup = (config.warmup_ratio * total as f64).ceil() as usize;
    let base = config.learning_rate;
    if step < warmup {
        return base * step as f64 / warmup.max(1) as f64;
    }
    match config.schedule {
        Schedule::Constant => base,
        Schedule::Linear => base * (total.saturating_sub(step) as f64 / total.saturating_sub(warmup).max(1) as f64).max(0.0),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: usize,
    pub epochs_completed: usize,
    pub step_losses: Vec<f64>,
    pub epoch_train_loss: Vec<f64>,
    pub epoch_val_loss: Vec<f64>,
}

/// `<root>/epoch_<k>/adapter.json`, keeping only the latest epoch.
#[derive(Debug, Clone)]
pub struct CheckpointDir {
    root: PathBuf,
}

impl CheckpointDir {
    pub fn new(root: &Path) -> Self {
        CheckpointDir {
            root: root.to_path_buf(),
        }
    }

    pub fn epoch_dir(&self, epoch: usize) -> PathBuf {
        self.root.join(format!("epoch_{epoch}"))
    }

    pub fn latest_adapter(&self, epoch: usize) -> PathBuf {
        self.epoch_dir(epoch).join("adapter.json")
    }

    pub fn save(&self, epoch: usize, adapter: &LoraAdapter, log: &TrainLog) -> Result<PathBuf, BackendError> {
        let path = self.latest_adapter(epoch);
        adapter.save(&path)?;
        let state = self.epoch_dir(epoch).join("trainer_state.json");
        let json = serde_json::to_vec_pretty(log).map_err(|e| BackendError::Format(e.to_string()))?;
        fs::write(&state, json).map_err(|source| BackendError::Io { path: state, source })?;
        self.prune(epoch)?;
        Ok(path)
    }

    fn prune(&self, keep: usize) -> Result<(), BackendError> {
        let io = |source| BackendError::Io {
            path: self.root.clone(),
            source,
        };
        for entry in fs::read_dir(&self.root).map_err(io)? {
            let entry = entry.map_err(io)?;
            let name = entry.file_name();
            let Some(k) = name.to_str().and_then(|n| n.strip_prefix("epoch_")).and_then(|k| k.parse::<usize>().ok())
            else {
                continue;
            };
            if k != keep {
                fs::remove_dir_all(entry.path()).map_err(io)?;
            }
        }
        Ok(())
    }
}

struct AdamW {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl AdamW {
    fn new(shapes: &[(usize, usize)]) -> Self {
        AdamW {
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64, weight_decay: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads[i]);
            for j in 0..p.data.len() {
                m.data[j] = BETA1 * m.data[j] + (1.0 - BETA1) * g.data[j];
                v.data[j] = BETA2 * v.data[j] + (1.0 - BETA2) * g.data[j] * g.data[j];
                let update = (m.data[j] / c1) / ((v.data[j] / c2).sqrt() + EPS);
                p.data[j] -= lr * (update + weight_decay * p.data[j]);
            }
        }
    }
}

/// Adapter tensors in module-name order, `A` before `B`.
pub fn adapter_params(adapter: &mut LoraAdapter) -> Vec<&mut Matrix> {
    adapter
        .modules
        .values_mut()
        .flat_map(|p| [&mut p.a, &mut p.b])
        .collect()
}

/// lm loss of one sequence and its gradients with respect to the adapter
/// tensors, in [`adapter_params`] order.
pub fn lm_loss_gradients(
    model: &ToyModel,
    adapter: &LoraAdapter,
    seq: &TokenizedSequence,
    dropout: Option<(&mut ChaCha8Rng, f64)>,
) -> Result<(f64, Vec<Matrix>), BackendError> {
    let ids = attended_ids(seq, model.config.vocab_size)?;
    let targets = next_token_targets(ids, &seq.loss_mask[..ids.len()]);
    if targets.is_empty() {
        return Err(BackendError::NoSupervisedPositions);
    }
    let mut graph = Graph::new();
    let tape = TapeAdapter::register(&mut graph, adapter);
    let logits = model.tape_logits(&mut graph, &tape, ids, dropout);
    let loss = graph.cross_entropy(logits, &targets);
    let mut grads = graph.backward(loss);
    let value = graph.scalar(loss);
    let mut out = Vec::with_capacity(tape.vars.len() * 2);
    for (a, b) in tape.vars.values() {
        for v in [a, b] {
            let shape = graph.value(*v).shape();
            out.push(grads.take(*v).unwrap_or_else(|| Matrix::zeros(shape.0, shape.1)));
        }
    }
    Ok((value, out))
}

/// Trains a fresh adapter on `train` over frozen `model` weights.
///
/// Each optimizer step averages per-sequence gradients over an effective
/// batch of `batch_size × grad_accum` sequences.
pub fn finetune(
    model: &ToyModel,
    train: &[TokenizedSequence],
    validation: &[TokenizedSequence],
    lora: &LoraConfig,
    config: &TrainConfig,
    checkpoints: Option<&CheckpointDir>,
) -> Result<(LoraAdapter, TrainLog), BackendError> {
    lora.validate().map_err(BackendError::Config)?;
    config.validate().map_err(BackendError::Config)?;
    if train.is_empty() {
        return Err(BackendError::EmptyDataset);
    }
    let mut adapter = LoraAdapter::init(&model.lora_targets(), lora, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let shapes: Vec<_> = adapter_params(&mut adapter).iter().map(|m| m.shape()).collect();
    let mut optimizer = AdamW::new(&shapes);
    let steps_per_epoch = config.steps_per_epoch(train.len());
    let total = steps_per_epoch * config.epochs;
    let mut log = TrainLog::default();

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.effective_batch()) {
            let mut sum: Vec<Matrix> = shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect();
            let mut loss = 0.0;
            for &i in chunk {
                let (l, grads) = lm_loss_gradients(model, &adapter, &train[i], Some((&mut rng, lora.dropout)))?;
                loss += l;
                for (s, g) in sum.iter_mut().zip(&grads) {
                    s.add_assign(g);
                }
            }
            let n = chunk.len() as f64;
            let grads: Vec<Matrix> = sum.iter().map(|g| g.scale(1.0 / n)).collect();
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(BackendError::NumericFailure(format!("non-finite loss or gradient at step {}", log.steps)));
            }
            let lr = lr_at(log.steps, total, config);
            optimizer.step(&mut adapter_params(&mut adapter), &grads, lr, config.weight_decay);
            log.step_losses.push(loss / n);
            log.steps += 1;
            epoch_loss += loss;
        }
        log.epoch_train_loss.push(epoch_loss / train.len() as f64);
        if !validation.is_empty() {
            log.epoch_val_loss.push(mean_loss(model, Some(&adapter), validation)?);
        }
        log.epochs_completed = epoch;
        if let Some(dir) = checkpoints {
            dir.save(epoch, &adapter, &log)?;
        }
        log::info!(
            "epoch {epoch}/{}: train loss {:.4}{}",
            config.epochs,
            log.epoch_train_loss.last().unwrap_or(&f64::NAN),
            log.epoch_val_loss.last().map(|v| format!(", val loss {v:.4}")).unwrap_or_default()
        );
    }
    Ok((adapter, log))
}

/// Mean lm loss over `data` without dropout.
pub fn mean_loss(model: &ToyModel, adapter: Option<&LoraAdapter>, data: &[TokenizedSequence]) -> Result<f64, BackendError> {
    let mut total = 0.0;
    for seq in data {
        let ids = attended_ids(seq, model.config.vocab_size)?;
        let hidden = model.extend(adapter, ids, &mut KvCache::default());
        total += masked_nll(&model.logits(&hidden), ids, &seq.loss_mask[..ids.len()])?;
    }
    Ok(total / data.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let c = TrainConfig {
            learning_rate: 1.0,
            ..Default::default()
        };
        // 20 steps, 2 warmup.
        assert_eq!(lr_at(0, 20, &c), 0.0);
        assert_eq!(lr_at(1, 20, &c), 0.5);
        assert_eq!(lr_at(2, 20, &c), 1.0);
        assert!((lr_at(11, 20, &c) - 0.5).abs() < 1e-12);
        assert_eq!(lr_at(20, 20, &c), 0.0);
        let flat = TrainConfig { schedule: Schedule::Constant, ..c };
        assert_eq!(lr_at(15, 20, &flat), 1.0);
    }

    #[test]
    fn effective_batch_of_eight() {
        let c = TrainConfig::default();
        assert_eq!(c.effective_batch(), 8);
        assert_eq!(c.steps_per_epoch(17), 3);
    }

    #[test]
    fn adamw_first_step_is_signed_lr() {
        let mut p = Matrix::row_vector(&[1.0, -1.0]);
        let mut opt = AdamW::new(&[(1, 2)]);
        opt.step(&mut [&mut p], &[Matrix::row_vector(&[0.3, -2.0])], 0.1, 0.0);
        assert!((p.data[0] - 0.9).abs() < 1e-6);
        assert!((p.data[1] + 0.9).abs() < 1e-6);
    }
}
