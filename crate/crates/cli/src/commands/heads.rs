use std::fmt;

use clonekd::prompting::{build_prompt, render_simple_prompt, RenderedExchange};
use clonekd::stabilize::{train_head, HeadManifest, HeadObjective, HeadTrainConfig};
use serde::Serialize;

use super::{backbone_label, load_pairs, open_backbone, open_backend, write_json, Layout, TrainManifest};
use crate::config::{BackboneChoice, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadRow {
    pub backbone: String,
    pub objective: HeadObjective,
    pub steps: usize,
    pub train_accuracy: f64,
    pub degenerate_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeadSummary {
    pub rows: Vec<HeadRow>,
}

impl fmt::Display for HeadSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rows {
            writeln!(
                f,
                "{} / {}: {} steps, train accuracy {:.3}",
                r.backbone, r.objective, r.steps, r.train_accuracy
            )?;
        }
        Ok(())
    }
}

/// The inference prompt shared by head training and head evaluation.
pub fn head_exchange(config: &RunConfig, pair: &clonekd::corpus::CodePair) -> Result<RenderedExchange, CliError> {
    build_prompt(Some(&config.system_prompt), &render_simple_prompt(pair)).map_err(CliError::data)
}

/// Trains one head per configured backbone and objective on the seed
/// training pairs, with the backbone frozen.
pub fn cmd_train_head(config: &RunConfig) -> Result<HeadSummary, CliError> {
    let layout = Layout::new(config);
    let mut dataset = Vec::new();
    for pair in &config.pairs {
        for p in load_pairs(&layout.seed_file(&pair.name(), "train.jsonl"), "seed")? {
            dataset.push((head_exchange(config, &p)?, p.label));
        }
    }

    let base = open_backend(config)?;
    let mut rows = Vec::new();
    for &choice in &config.eval.backbones {
        let adapted = open_backbone(config, base.as_ref(), choice)?;
        let backbone = adapted.as_deref().unwrap_or(base.as_ref());
        let label = backbone_label(config, choice);
        let adapter = match choice {
            BackboneChoice::Base => None,
            BackboneChoice::Kd => {
                let m: TrainManifest = super::read_json(&layout.train_dir(config.train.variant).join("manifest.json"))?;
                Some(m.adapter)
            }
        };
        for &objective in &config.head.objectives {
            let trainer = HeadTrainConfig {
                objective,
                ..config.head.trainer.clone()
            };
            let (params, log) = train_head(backbone, &dataset, &trainer)?;
            let manifest = HeadManifest {
                objective,
                contrastive: trainer.contrastive.clone(),
                dropout: trainer.dropout,
                backbone: label.clone(),
                backbone_checksum: backbone.parameter_checksum()?,
                adapter: adapter.clone(),
                seed: trainer.seed,
                log: log.clone(),
            };
            let dir = layout.head_dir(&label, objective);
            write_json(&dir.join("head.json"), &params)?;
            write_json(&dir.join("manifest.json"), &manifest)?;
            rows.push(HeadRow {
                backbone: label.clone(),
                objective,
                steps: log.steps,
                train_accuracy: log.train_accuracy,
                degenerate_batches: log.degenerate_batches,
            });
        }
    }
    Ok(HeadSummary { rows })
}
