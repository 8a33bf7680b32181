use std::fmt;
use std::path::PathBuf;

use clonekd::backend::{encode, Backend, BackendError, FinetuneReport, TokenizedSequence};
use clonekd::corpus::read_jsonl;
use clonekd::prompting::build_exchange;
use clonekd::variants::{split_train_val, TrainingExample, VariantKind};
use serde::{Deserialize, Serialize};

use super::{open_backend, relative_to, write_json, Layout};
use crate::config::{RunConfig, TrainSection};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub run_id: String,
    pub variant: VariantKind,
    pub backend: String,
    pub train_examples: usize,
    pub val_examples: usize,
    /// Relative to the run directory.
    pub adapter: PathBuf,
    pub base_checksum_before: String,
    pub base_checksum_after: String,
    pub adapted_checksum: String,
    pub val_loss_base: Option<f64>,
    pub val_loss_adapted: Option<f64>,
    pub report: FinetuneReport,
    pub seed: u64,
    pub system_prompt: String,
    pub config: TrainSection,
}

impl fmt::Display for TrainManifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{}: {} steps over {} examples ({} held out) -> {}",
            self.variant,
            self.report.steps,
            self.train_examples,
            self.val_examples,
            self.adapter.display()
        )?;
        if let (Some(base), Some(adapted)) = (self.val_loss_base, self.val_loss_adapted) {
            writeln!(f, "validation lm loss: base {base:.4}, adapted {adapted:.4}")?;
        }
        Ok(())
    }
}

fn encode_examples(
    config: &RunConfig,
    backend: &dyn Backend,
    examples: &[TrainingExample],
) -> Result<Vec<TokenizedSequence>, CliError> {
    examples
        .iter()
        .map(|ex| {
            let exchange = build_exchange(
                Some(&config.system_prompt),
                &ex.user_prompt,
                &ex.target_response,
                config.train.loss_mode,
            )
            .map_err(|e| CliError::Data(format!("{}: {e}", ex.pair_id)))?;
            encode(&exchange, backend.tokenizer(), backend.max_len()).map_err(|e| BackendError::from(e).into())
        })
        .collect()
}

fn mean_lm_loss(backend: &dyn Backend, data: &[TokenizedSequence]) -> Result<Option<f64>, CliError> {
    if data.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for seq in data {
        total += backend.lm_loss(seq)?;
    }
    Ok(Some(total / data.len() as f64))
}

/// Fine-tunes an adapter on the configured variant and writes its manifest.
pub fn cmd_train(config: &RunConfig) -> Result<TrainManifest, CliError> {
    let layout = Layout::new(config);
    let kind = config.train.variant;
    let path = layout.variant_file(kind);
    if !path.exists() {
        return Err(CliError::Data(format!("{} is missing; run `variants` first", path.display())));
    }
    let examples: Vec<TrainingExample> = read_jsonl(&path)?;
    if examples.is_empty() {
        return Err(CliError::Data(format!("{} has no examples", path.display())));
    }
    let (train, val) = split_train_val(&examples, config.train.val_fraction, config.seed);

    let backend = open_backend(config)?;
    let train_seqs = encode_examples(config, backend.as_ref(), &train)?;
    let val_seqs = encode_examples(config, backend.as_ref(), &val)?;

    let dir = layout.train_dir(kind);
    let before = backend.parameter_checksum()?;
    let mut report = backend.finetune(
        &train_seqs,
        &val_seqs,
        &config.train.lora,
        &config.train.trainer,
        Some(&dir.join("checkpoints")),
    )?;
    let after = backend.parameter_checksum()?;
    if before != after {
        return Err(CliError::Data(format!("base parameters changed during training ({before} -> {after})")));
    }
    let adapter_path = report
        .adapter_path
        .clone()
        .ok_or_else(|| CliError::Data("backend did not write an adapter".into()))?;
    let adapted = backend.with_adapter(&adapter_path)?;
    let adapter = relative_to(&adapter_path, &layout.root);
    report.adapter_path = Some(adapter.clone());

    let manifest = TrainManifest {
        run_id: config.run_id.clone(),
        variant: kind,
        backend: backend.name(),
        train_examples: train.len(),
        val_examples: val.len(),
        adapter,
        base_checksum_before: before,
        base_checksum_after: after,
        adapted_checksum: adapted.parameter_checksum()?,
        val_loss_base: mean_lm_loss(backend.as_ref(), &val_seqs)?,
        val_loss_adapted: mean_lm_loss(adapted.as_ref(), &val_seqs)?,
        report,
        seed: config.seed,
        system_prompt: config.system_prompt.clone(),
        config: config.train.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
