use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use clonekd::corpus::write_jsonl;
use clonekd::teacher::{
    credential_from_env, generate_traces, retain_agreeing, GenerationSummary, HttpTeacher, Ledger, TeacherClient,
    TeacherTrace,
};
use serde::Serialize;

use super::{load_pairs, write_json, Layout};
use crate::config::{RunConfig, TeacherKind};
use crate::error::CliError;
use crate::scripted::ScriptedTeacher;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistillRow {
    pub pair: String,
    #[serde(flatten)]
    pub counts: GenerationSummary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DistillSummary {
    pub rows: Vec<DistillRow>,
}

impl DistillSummary {
    pub fn total(&self) -> GenerationSummary {
        self.rows.iter().fold(GenerationSummary::default(), |mut t, r| {
            let c = &r.counts;
            t.seeds += c.seeds;
            t.requested += c.requested;
            t.reused += c.reused;
            t.failed += c.failed;
            t.disagreed += c.disagreed;
            t.unparseable += c.unparseable;
            t.retained += c.retained;
            t
        })
    }
}

impl fmt::Display for DistillSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "| Language pair | Seed samples | Retained KD samples | Requested | Reused | Failed | Disagreed | Unparseable |"
        )?;
        writeln!(
            f,
            "|---------------|--------------|---------------------|-----------|--------|--------|-----------|-------------|"
        )?;
        let total = DistillRow {
            pair: "Total".into(),
            counts: self.total(),
        };
        for r in self.rows.iter().chain(std::iter::once(&total)) {
            let c = &r.counts;
            writeln!(
                f,
                "| {:<13} | {:>12} | {:>19} | {:>9} | {:>6} | {:>6} | {:>9} | {:>11} |",
                r.pair, c.seeds, c.retained, c.requested, c.reused, c.failed, c.disagreed, c.unparseable
            )?;
        }
        Ok(())
    }
}

fn http_client(config: &RunConfig) -> Result<Arc<dyn TeacherClient>, CliError> {
    let t = &config.teacher;
    let key = credential_from_env(&t.api_key_env)?;
    let endpoint = t.endpoint.as_deref().unwrap_or_default();
    let model = t.model.as_deref().unwrap_or_default();
    let client = HttpTeacher::new(endpoint, model, key, Duration::from_secs(t.timeout_s))
        .map_err(|e| CliError::Config(format!("teacher client: {e}")))?;
    Ok(Arc::new(client))
}

/// Queries the teacher for every training seed not yet in the ledger and
/// keeps the traces whose verdict agrees with the ground truth.
pub fn cmd_distill(config: &RunConfig) -> Result<DistillSummary, CliError> {
    let layout = Layout::new(config);
    let http = match config.teacher.kind {
        TeacherKind::Http => Some(http_client(config)?),
        TeacherKind::Scripted => None,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::External(format!("async runtime: {e}")))?;

    let mut rows = Vec::new();
    for pair in &config.pairs {
        let name = pair.name();
        let seeds = load_pairs(&layout.seed_file(&name, "train.jsonl"), "seed")?;
        let client = match &http {
            Some(c) => Arc::clone(c),
            None => Arc::new(ScriptedTeacher::new(&seeds, &config.teacher.scripted)) as Arc<dyn TeacherClient>,
        };
        let dir = layout.distill_dir(&name);
        let ledger = Ledger::open(&dir.join("ledger.jsonl"))?;
        let (records, issued) = runtime.block_on(generate_traces(client, &seeds, &config.teacher.policy, &ledger))?;
        let (retained, counts) = retain_agreeing(&seeds, &records, issued);
        let traces: Vec<TeacherTrace> = retained.into_iter().map(|(_, t)| t).collect();
        write_jsonl(&dir.join("retained.jsonl"), &traces)?;
        log::info!("{name}: {} of {} seeds retained", counts.retained, counts.seeds);
        rows.push(DistillRow { pair: name, counts });
    }

    let summary = DistillSummary { rows };
    write_json(&layout.root.join("distill").join("summary.json"), &summary)?;
    let total = summary.total();
    if total.retained == 0 {
        let msg = format!("no teacher trace was retained\n{summary}");
        return Err(if total.failed == total.seeds {
            CliError::External(msg)
        } else {
            CliError::Data(msg)
        });
    }
    Ok(summary)
}
