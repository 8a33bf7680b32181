//! Verdict parsing, confusion metrics, response rate, scaled F1 and comparison reports.

mod metrics;
mod parse;
pub mod reference;
mod report;

pub use metrics::{
    confusion, f1_from, metrics, response_rate, scaled_f1, ConfusionCounts, InvalidPolicy,
    MetricsError, Scores,
};
pub use parse::{parse_conclusion, Decision, CONCLUSION_WINDOW};
pub use report::{
    compare, render_table, Comparison, ComparisonRow, EvalReport, TimingRow, BASE_BACKBONE,
};
