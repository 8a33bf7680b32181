use std::fmt;

use clonekd::backend::Backend;
use clonekd::corpus::{exclude_oversized, filter_accepted, load_corpus, seed_datasets, write_jsonl, SeedDatasets, Submission};
use serde::Serialize;

use super::{open_backend, write_json, Layout};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedRow {
    pub pair: String,
    /// Training seeds, the ones sent to the teacher.
    pub train: usize,
    pub sd_test: usize,
    pub dd_test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedSummary {
    pub submissions: usize,
    pub accepted: usize,
    pub within_length: usize,
    pub rows: Vec<SeedRow>,
}

impl fmt::Display for SeedSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "submissions: {} loaded, {} accepted, {} within the length cap",
            self.submissions, self.accepted, self.within_length
        )?;
        writeln!(f, "| Language pair | Seed samples | SD test | DD test |")?;
        writeln!(f, "|---------------|--------------|---------|---------|")?;
        for r in &self.rows {
            writeln!(
                f,
                "| {:<13} | {:>12} | {:>7} | {:>7} |",
                r.pair, r.train, r.sd_test, r.dd_test
            )?;
        }
        Ok(())
    }
}

fn valid_submissions(config: &RunConfig, backend: &dyn Backend) -> Result<(usize, usize, Vec<Submission>), CliError> {
    let all = load_corpus(&config.corpus.root, &config.corpus.metadata, &config.languages())?;
    let accepted = filter_accepted(&all);
    let n_accepted = accepted.len();
    let tokenizer = backend.tokenizer();
    let valid = exclude_oversized(accepted, backend.max_len(), |text| tokenizer.encode_text(text).len());
    Ok((all.len(), n_accepted, valid))
}

fn build(config: &RunConfig) -> Result<(SeedSummary, Vec<(String, SeedDatasets)>), CliError> {
    let backend = open_backend(config)?;
    let (submissions, accepted, valid) = valid_submissions(config, backend.as_ref())?;
    let mut rows = Vec::new();
    let mut sets = Vec::new();
    for pair in &config.pairs {
        let (l1, l2) = (pair.lang1(), pair.lang2());
        let data = seed_datasets(&valid, (&l1, &l2), pair.plan(), config.corpus.dd_fraction, config.seed)?;
        rows.push(SeedRow {
            pair: pair.name(),
            train: data.train.len(),
            sd_test: data.sd_test.len(),
            dd_test: data.dd_test.len(),
        });
        sets.push((pair.name(), data));
    }
    let summary = SeedSummary {
        submissions,
        accepted,
        within_length: valid.len(),
        rows,
    };
    Ok((summary, sets))
}

/// Builds the balanced seed datasets and split manifests for every pair.
pub fn cmd_seed(config: &RunConfig) -> Result<SeedSummary, CliError> {
    let (summary, sets) = build(config)?;
    let layout = Layout::new(config);
    for (name, data) in sets {
        write_jsonl(&layout.seed_file(&name, "train.jsonl"), &data.train)?;
        write_jsonl(&layout.seed_file(&name, "sd_test.jsonl"), &data.sd_test)?;
        write_jsonl(&layout.seed_file(&name, "dd_test.jsonl"), &data.dd_test)?;
        write_json(&layout.seed_file(&name, "split_manifest.json"), &data.manifest)?;
    }
    Ok(summary)
}

/// Validates the configuration and corpus and checks that seeding would
/// succeed, without writing files, calling the teacher or training.
pub fn dry_run(config: &RunConfig) -> Result<SeedSummary, CliError> {
    config.validate()?;
    build(config).map(|(summary, _)| summary)
}
