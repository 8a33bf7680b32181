use clonekd::corpus::read_jsonl;
use clonekd::eval::{compare, render_table, Comparison, EvalReport};
use serde::Serialize;

use super::{write_json, write_text, Layout};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub comparison: Comparison,
    /// Scores only; identical across reruns of the same config.
    pub table: String,
    /// Scores followed by the per-method timing ranking.
    pub timed_table: String,
}

/// Builds the comparison table from the eval reports. Timings live in a
/// separate file because wall time differs between otherwise identical runs.
pub fn cmd_report(config: &RunConfig) -> Result<ReportSummary, CliError> {
    let layout = Layout::new(config);
    let path = layout.eval_dir().join("reports.jsonl");
    if !path.exists() {
        return Err(CliError::Data(format!("{} is missing; run `eval` first", path.display())));
    }
    let reports: Vec<EvalReport> = read_jsonl(&path)?;
    let comparison = compare(&reports);
    let table = render_table(&comparison, false);
    let timed_table = render_table(&comparison, true);
    let dir = layout.report_dir();
    write_text(&dir.join("report.md"), &table)?;
    write_text(&dir.join("timings.md"), &timed_table)?;
    write_json(&dir.join("report.json"), &comparison)?;
    Ok(ReportSummary {
        comparison,
        table,
        timed_table,
    })
}
