use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{
    confusion, metrics, response_rate, scaled_f1, ConfusionCounts, InvalidPolicy, MetricsError,
};
use super::parse::Decision;

/// Backbone name used for the unadapted model.
pub const BASE_BACKBONE: &str = "base";

/// Scores for one (method, backbone, test set) evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub method: String,
    pub backbone: String,
    pub test_set: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub response_rate: f64,
    pub scaled_f1: f64,
    pub n_test: usize,
    pub wall_time_s: f64,
    pub confusion: ConfusionCounts,
}

impl EvalReport {
    #[allow(clippy::too_many_arguments)]
    pub fn from_predictions(
        run_id: &str,
        method: &str,
        backbone: &str,
        test_set: &str,
        preds: &[Decision],
        truth: &[u8],
        policy: InvalidPolicy,
        wall_time_s: f64,
    ) -> Result<Self, MetricsError> {
        let counts = confusion(preds, truth)?;
        let scores = metrics(&counts);
        Ok(EvalReport {
            run_id: run_id.to_string(),
            method: method.to_string(),
            backbone: backbone.to_string(),
            test_set: test_set.to_string(),
            precision: scores.precision,
            recall: scores.recall,
            f1: scores.f1,
            response_rate: response_rate(&counts, truth.len()),
            scaled_f1: scaled_f1(preds, truth, policy)?,
            n_test: truth.len(),
            wall_time_s,
            confusion: counts,
        })
    }

    pub fn mean_seconds_per_sample(&self) -> f64 {
        if self.n_test == 0 {
            0.0
        } else {
            self.wall_time_s / self.n_test as f64
        }
    }
}

fn marker(delta: f64) -> &'static str {
    if delta > 0.0 {
        "▲"
    } else if delta < 0.0 {
        "▼"
    } else {
        "="
    }
}

/// One row of the comparison: a run, and its delta against the base backbone
/// for the same method and test set when one exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    #[serde(flatten)]
    pub report: EvalReport,
    pub f1_delta: Option<f64>,
    pub response_rate_delta: Option<f64>,
}

/// Per-method mean time per sample, fastest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub mean_seconds_per_sample: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub timings: Vec<TimingRow>,
}

pub fn compare(runs: &[EvalReport]) -> Comparison {
    let baselines: BTreeMap<(&str, &str), &EvalReport> = runs
        .iter()
        .filter(|r| r.backbone == BASE_BACKBONE)
        .map(|r| ((r.method.as_str(), r.test_set.as_str()), r))
        .collect();
    let rows = runs
        .iter()
        .map(|r| {
            let base = (r.backbone != BASE_BACKBONE)
                .then(|| baselines.get(&(r.method.as_str(), r.test_set.as_str())))
                .flatten();
            ComparisonRow {
                report: r.clone(),
                f1_delta: base.map(|b| r.f1 - b.f1),
                response_rate_delta: base.map(|b| r.response_rate - b.response_rate),
            }
        })
        .collect();

    let mut per_method: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in runs {
        let entry = per_method.entry(&r.method).or_default();
        entry.0 += r.wall_time_s;
        entry.1 += r.n_test;
    }
    let mut timings: Vec<TimingRow> = per_method
        .into_iter()
        .map(|(method, (secs, samples))| TimingRow {
            method: method.to_string(),
            mean_seconds_per_sample: if samples == 0 { 0.0 } else { secs / samples as f64 },
            samples,
        })
        .collect();
    timings.sort_by(|a, b| a.mean_seconds_per_sample.total_cmp(&b.mean_seconds_per_sample));
    Comparison { rows, timings }
}

fn fmt_delta(delta: Option<f64>) -> String {
    match delta {
        Some(d) => format!("{d:+.2} {}", marker(d)),
        None => "-".to_string(),
    }
}

/// Human-readable comparison table. Timing lines are omitted when `with_timings` is false.
pub fn render_table(comparison: &Comparison, with_timings: bool) -> String {
    let headers = [
        "Test Set", "Method", "Backbone", "Precision", "Recall", "F1", "dF1", "Resp.Rate", "dRR",
        "Scaled F1",
    ];
    let body: Vec<[String; 10]> = comparison
        .rows
        .iter()
        .map(|row| {
            let r = &row.report;
            [
                r.test_set.clone(),
                r.method.clone(),
                r.backbone.clone(),
                format!("{:.2}", r.precision),
                format!("{:.2}", r.recall),
                format!("{:.2}", r.f1),
                fmt_delta(row.f1_delta),
                format!("{:.1}", r.response_rate),
                fmt_delta(row.response_rate_delta),
                format!("{:.2}", r.scaled_f1),
            ]
        })
        .collect();
    let mut widths = headers.map(|h| h.chars().count());
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String], out: &mut String| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        let _ = writeln!(out, "| {} |", padded.join(" | "));
    };
    line(&headers.map(String::from), &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "|-{}-|", rule.join("-|-"));
    for row in &body {
        line(row, &mut out);
    }
    if with_timings && !comparison.timings.is_empty() {
        let _ = writeln!(out, "\nMean time per sample (fastest first):");
        for t in &comparison.timings {
            let _ = writeln!(
                out,
                "  {:<20} {:>12.6} s  ({} samples)",
                t.method, t.mean_seconds_per_sample, t.samples
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(method: &str, backbone: &str, f1: f64, rr: f64, secs: f64) -> EvalReport {
        EvalReport {
            run_id: "r".into(),
            method: method.into(),
            backbone: backbone.into(),
            test_set: "Python-Java_SD".into(),
            precision: f1,
            recall: f1,
            f1,
            response_rate: rr,
            scaled_f1: f1,
            n_test: 10,
            wall_time_s: secs,
            confusion: ConfusionCounts::default(),
        }
    }

    #[test]
    fn single_run_single_row() {
        let c = compare(&[report("generation", "base", 80.0, 30.0, 1.0)]);
        let table = render_table(&c, false);
        assert_eq!(table.lines().count(), 3);
        assert_eq!(c.rows[0].f1_delta, None);
    }

    #[test]
    fn kd_delta_markers() {
        let c = compare(&[
            report("generation", "base", 80.25, 32.3, 1.0),
            report("generation", "kd", 78.64, 54.6, 1.0),
        ]);
        let kd = &c.rows[1];
        assert!((kd.f1_delta.unwrap() + 1.61).abs() < 1e-9);
        let table = render_table(&c, false);
        assert!(table.contains("-1.61 ▼"));
        assert!(table.contains("+22.30 ▲"));
    }

    #[test]
    fn timings_sorted_fastest_first() {
        let c = compare(&[
            report("generation", "base", 1.0, 1.0, 5.0),
            report("binary_head", "base", 1.0, 1.0, 0.5),
        ]);
        assert_eq!(c.timings[0].method, "binary_head");
    }

    #[test]
    fn from_predictions_counts() {
        let preds = [Decision::Clone, Decision::NotClone, Decision::Unparseable, Decision::Clone];
        let r = EvalReport::from_predictions("r", "m", "base", "t", &preds, &[1, 0, 1, 0], InvalidPolicy::WrongLabel, 0.0)
            .unwrap();
        assert_eq!(r.response_rate, 75.0);
        assert!((r.precision - 50.0).abs() < 1e-12);
        assert!((r.recall - 100.0).abs() < 1e-12);
        assert!(r.scaled_f1 < r.f1);
    }
}
