use std::collections::HashMap;
use std::fmt;

use clonekd::corpus::{read_jsonl, write_jsonl, CodePair};
use clonekd::teacher::TeacherTrace;
use clonekd::variants::{build_variant, TrainingExample, VariantKind};
use serde::Serialize;

use super::{load_pairs, Layout};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VariantsSummary {
    pub counts: Vec<(VariantKind, usize)>,
}

impl fmt::Display for VariantsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (kind, n) in &self.counts {
            writeln!(f, "{kind}: {n} examples")?;
        }
        Ok(())
    }
}

/// Retained `(pair, trace)` tuples across every configured language pair.
pub fn retained_pairs(config: &RunConfig) -> Result<Vec<(CodePair, TeacherTrace)>, CliError> {
    let layout = Layout::new(config);
    let mut out = Vec::new();
    for pair in &config.pairs {
        let name = pair.name();
        let seeds = load_pairs(&layout.seed_file(&name, "train.jsonl"), "seed")?;
        let path = layout.distill_dir(&name).join("retained.jsonl");
        if !path.exists() {
            return Err(CliError::Data(format!("{} is missing; run `distill` first", path.display())));
        }
        let traces: Vec<TeacherTrace> = read_jsonl(&path)?;
        let mut by_id: HashMap<String, CodePair> = seeds.into_iter().map(|p| (p.pair_id.clone(), p)).collect();
        for trace in traces {
            let seed = by_id
                .remove(&trace.pair_id)
                .ok_or_else(|| CliError::Data(format!("{name}: retained trace {} has no seed pair", trace.pair_id)))?;
            out.push((seed, trace));
        }
    }
    Ok(out)
}

/// Writes one training file per configured variant kind.
pub fn cmd_variants(config: &RunConfig) -> Result<VariantsSummary, CliError> {
    let layout = Layout::new(config);
    let retained = retained_pairs(config)?;
    let borrowed: Vec<(&CodePair, TeacherTrace)> = retained.iter().map(|(p, t)| (p, t.clone())).collect();
    let mut counts = Vec::new();
    for &kind in &config.variants.kinds {
        let examples: Vec<TrainingExample> = build_variant(&borrowed, kind).map_err(CliError::data)?;
        write_jsonl(&layout.variant_file(kind), &examples)?;
        counts.push((kind, examples.len()));
    }
    Ok(VariantsSummary { counts })
}
