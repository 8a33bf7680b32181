//! One function per subcommand. Every artifact lives under
//! `<output_root>/<run_id>/`:
//!
//! ```text
//! seed/<pair>/{train,sd_test,dd_test}.jsonl, split_manifest.json
//! distill/<pair>/{ledger,retained}.jsonl, distill/summary.json
//! variants/<KIND>.jsonl
//! train/<KIND>/{manifest.json, checkpoints/epoch_<k>/}
//! heads/<backbone>/<objective>/{head.json, manifest.json}
//! eval/{reports.jsonl, predictions/...}
//! report/{report.json, report.md, timings.md}
//! ```

mod distill;
mod eval;
mod heads;
mod report;
mod seed;
mod train;
mod variants;

use std::fs;
use std::path::{Path, PathBuf};

use clonekd::backend::{Backend, PluginBackend, ToyBackend};
use clonekd::corpus::{read_jsonl, CodePair};
use clonekd::stabilize::HeadObjective;
use clonekd::variants::VariantKind;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use distill::{cmd_distill, DistillSummary};
pub use eval::{cmd_eval, EvalSummary};
pub use heads::{cmd_train_head, HeadSummary};
pub use report::{cmd_report, ReportSummary};
pub use seed::{cmd_seed, dry_run, SeedSummary};
pub use train::{cmd_train, TrainManifest};
pub use variants::{cmd_variants, VariantsSummary};

use crate::config::{BackboneChoice, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(config: &RunConfig) -> Self {
        Layout { root: config.run_dir() }
    }

    pub fn seed_file(&self, pair: &str, name: &str) -> PathBuf {
        self.root.join("seed").join(pair).join(name)
    }

    pub fn distill_dir(&self, pair: &str) -> PathBuf {
        self.root.join("distill").join(pair)
    }

    pub fn variant_file(&self, kind: VariantKind) -> PathBuf {
        self.root.join("variants").join(format!("{kind}.jsonl"))
    }

    pub fn train_dir(&self, kind: VariantKind) -> PathBuf {
        self.root.join("train").join(kind.as_str())
    }

    pub fn head_dir(&self, backbone: &str, objective: HeadObjective) -> PathBuf {
        self.root.join("heads").join(backbone).join(objective.to_string())
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

pub fn open_backend(config: &RunConfig) -> Result<Box<dyn Backend>, CliError> {
    match (&config.backend.toy, &config.backend.plugin) {
        (Some(toy), None) => Ok(Box::new(ToyBackend::new(toy.model.clone())?.with_max_len(toy.max_len))),
        (None, Some(plugin)) => Ok(Box::new(PluginBackend::spawn(plugin)?)),
        _ => Err(CliError::Config("exactly one backend must be configured".into())),
    }
}

pub fn backbone_label(config: &RunConfig, choice: BackboneChoice) -> String {
    match choice {
        BackboneChoice::Base => clonekd::eval::BASE_BACKBONE.to_string(),
        BackboneChoice::Kd => format!("kd-{}", config.train.variant),
    }
}

/// The base backend, or the base backend carrying the trained adapter.
pub fn open_backbone(
    config: &RunConfig,
    base: &dyn Backend,
    choice: BackboneChoice,
) -> Result<Option<Box<dyn Backend>>, CliError> {
    match choice {
        BackboneChoice::Base => Ok(None),
        BackboneChoice::Kd => {
            let layout = Layout::new(config);
            let manifest: TrainManifest = read_json(&layout.train_dir(config.train.variant).join("manifest.json"))
                .map_err(|e| CliError::Data(format!("{e}; run `train` before using the kd backbone")))?;
            let path = layout.root.join(&manifest.adapter);
            Ok(Some(base.with_adapter(&path)?))
        }
    }
}

pub fn load_pairs(path: &Path, stage: &str) -> Result<Vec<CodePair>, CliError> {
    if !path.exists() {
        return Err(CliError::Data(format!("{} is missing; run `{stage}` first", path.display())));
    }
    Ok(read_jsonl(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::data)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// `path` relative to `base` when it lies inside it.
pub fn relative_to(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}
