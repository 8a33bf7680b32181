//! Teacher querying, trace parsing and the agreement filter.

mod client;
mod trace;

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use client::{
    query_teacher, run_queries, ClientPolicy, HttpTeacher, QueryOutcome, RateLimiter, RequestError,
    TeacherClient, TeacherRequest,
};
pub use trace::{
    agreement, extract_teacher_label, filter_agreement, parse_teacher_json, AgreementFlag,
    FilterError, TeacherTrace,
};

use crate::corpus::CodePair;
use crate::eval::Decision;
use crate::prompting::render_reasoning_prompt;

#[derive(Debug, thiserror::Error)]
pub enum TeacherError {
    #[error("teacher credential missing: environment variable {0} is not set")]
    CredentialMissing(String),
    #[error("ledger io error at {path}: {source}")]
    Ledger {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("ledger line {line} is malformed: {source}")]
    LedgerFormat {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("request client setup failed: {0}")]
    Client(#[from] RequestError),
}

/// Reads the teacher credential from `var`.
pub fn credential_from_env(var: &str) -> Result<String, TeacherError> {
    std::env::var(var)
        .ok()
        .filter(|v| !v.trim().is_empty())
        .ok_or_else(|| TeacherError::CredentialMissing(var.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerStatus {
    Ok,
    Failed,
}

/// One cached teacher response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub pair_id: String,
    pub raw: String,
    pub reasoning: String,
    pub conclusion: String,
    pub predicted_label: Decision,
    pub status: LedgerStatus,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl LedgerRecord {
    pub fn from_outcome(outcome: &QueryOutcome) -> Self {
        match &outcome.result {
            Ok(raw) => {
                let trace = parse_teacher_json(&outcome.pair_id, raw);
                LedgerRecord {
                    pair_id: outcome.pair_id.clone(),
                    raw: trace.raw,
                    reasoning: trace.reasoning,
                    conclusion: trace.conclusion,
                    predicted_label: trace.predicted_label,
                    status: LedgerStatus::Ok,
                    attempts: outcome.attempts,
                    error: None,
                }
            }
            Err(err) => LedgerRecord {
                pair_id: outcome.pair_id.clone(),
                raw: String::new(),
                reasoning: String::new(),
                conclusion: String::new(),
                predicted_label: Decision::Unparseable,
                status: LedgerStatus::Failed,
                attempts: outcome.attempts,
                error: Some(err.to_string()),
            },
        }
    }

    pub fn trace(&self) -> TeacherTrace {
        TeacherTrace {
            pair_id: self.pair_id.clone(),
            reasoning: self.reasoning.clone(),
            conclusion: self.conclusion.clone(),
            predicted_label: self.predicted_label,
            raw: self.raw.clone(),
        }
    }
}

/// Append-only JSONL cache of teacher responses keyed by pair id.
pub struct Ledger {
    path: PathBuf,
}

impl Ledger {
    pub fn open(path: &Path) -> Result<Self, TeacherError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| TeacherError::Ledger {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        Ok(Ledger {
            path: path.to_path_buf(),
        })
    }

    pub fn read(&self) -> Result<Vec<LedgerRecord>, TeacherError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => {
                return Err(TeacherError::Ledger {
                    path: self.path.clone(),
                    source,
                })
            }
        };
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str(line) {
                Ok(r) => records.push(r),
                // A torn final line from an interrupted run is re-requested.
                Err(_) if i + 1 == text.lines().count() && !text.ends_with('\n') => break,
                Err(source) => return Err(TeacherError::LedgerFormat { line: i + 1, source }),
            }
        }
        Ok(records)
    }

    pub fn append(&self, record: &LedgerRecord) -> Result<(), TeacherError> {
        let io = |source| TeacherError::Ledger {
            path: self.path.clone(),
            source,
        };
        let mut line = serde_json::to_vec(record).expect("ledger record serializes");
        line.push(b'\n');
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io)?;
        file.write_all(&line).map_err(io)?;
        file.flush().map_err(io)
    }
}

/// Counts from one generation pass, shaped like a seed/retained summary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub seeds: usize,
    pub requested: usize,
    pub reused: usize,
    pub failed: usize,
    pub disagreed: usize,
    pub unparseable: usize,
    pub retained: usize,
}

/// Queries the teacher for every pair missing from the ledger, then returns
/// the ledger records for `pairs` in input order.
pub async fn generate_traces(
    client: Arc<dyn TeacherClient>,
    pairs: &[CodePair],
    policy: &ClientPolicy,
    ledger: &Ledger,
) -> Result<(Vec<LedgerRecord>, usize), TeacherError> {
    let existing = ledger.read()?;
    let known: BTreeSet<&str> = existing.iter().map(|r| r.pair_id.as_str()).collect();
    let requests: Vec<TeacherRequest> = pairs
        .iter()
        .filter(|p| !known.contains(p.pair_id.as_str()))
        .map(|p| TeacherRequest {
            pair_id: p.pair_id.clone(),
            prompt: render_reasoning_prompt(p),
        })
        .collect();
    let issued = requests.len();

    let sink = Arc::new(Mutex::new((
        Ledger {
            path: ledger.path.clone(),
        },
        None::<TeacherError>,
    )));
    let writer = Arc::clone(&sink);
    let outcomes = run_queries(client, requests, policy, move |outcome| {
        let mut guard = writer.lock().expect("ledger lock");
        let (ledger, first_error) = &mut *guard;
        if let Err(e) = ledger.append(&LedgerRecord::from_outcome(outcome)) {
            first_error.get_or_insert(e);
        }
    })
    .await;
    if let Some(err) = sink.lock().expect("ledger lock").1.take() {
        return Err(err);
    }

    let mut by_id: HashMap<String, LedgerRecord> = existing
        .into_iter()
        .map(|r| (r.pair_id.clone(), r))
        .collect();
    for outcome in &outcomes {
        by_id.insert(outcome.pair_id.clone(), LedgerRecord::from_outcome(outcome));
    }
    let records = pairs
        .iter()
        .filter_map(|p| by_id.remove(&p.pair_id))
        .collect();
    Ok((records, issued))
}

/// Applies the agreement filter to ledger records, returning retained
/// `(pair, trace)` tuples in pair order plus the counts.
pub fn retain_agreeing<'a>(
    pairs: &'a [CodePair],
    records: &[LedgerRecord],
    issued: usize,
) -> (Vec<(&'a CodePair, TeacherTrace)>, GenerationSummary) {
    let index: HashMap<String, &CodePair> = pairs.iter().map(|p| (p.pair_id.clone(), p)).collect();
    let ok: Vec<TeacherTrace> = records
        .iter()
        .filter(|r| r.status == LedgerStatus::Ok && index.contains_key(&r.pair_id))
        .map(LedgerRecord::trace)
        .collect();
    let retained = filter_agreement(&ok, &index).expect("records filtered to known pairs");
    let failed = records.iter().filter(|r| r.status == LedgerStatus::Failed).count();
    let unparseable = ok.iter().filter(|t| !t.predicted_label.is_valid()).count();
    let summary = GenerationSummary {
        seeds: pairs.len(),
        requested: issued,
        reused: records.len().saturating_sub(issued),
        failed,
        unparseable,
        disagreed: ok.len() - unparseable - retained.len(),
        retained: retained.len(),
    };
    (retained, summary)
}
