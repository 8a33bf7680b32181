use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::CodePair;
use crate::eval::{parse_conclusion, Decision};
use crate::prompting::REASONING_KEYS;

/// A teacher response split into its analysis and its verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeacherTrace {
    pub pair_id: String,
    pub reasoning: String,
    pub conclusion: String,
    pub predicted_label: Decision,
    pub raw: String,
}

/// Whether the teacher's verdict matches the ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementFlag {
    pub pair_id: String,
    pub delta: u8,
}

fn strip_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    // Drop an info string such as `json` on the opening fence line.
    let body = rest.split_once('\n').map_or("", |(_, body)| body);
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn json_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    let text = strip_fences(raw);
    if let Ok(Value::Object(map)) = serde_json::from_str(text) {
        return Some(map);
    }
    // Tolerate prose around a single embedded object.
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    match serde_json::from_str(text.get(start..=end)?) {
        Ok(Value::Object(map)) => Some(map),
        _ => None,
    }
}

fn field_text(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Null => None,
        other => Some(other.to_string()),
    }
}

/// Parses a teacher response into reasoning (the four analysis fields joined
/// by blank lines) and conclusion. Anything short of all five keys yields an
/// unparseable trace with empty fields.
pub fn parse_teacher_json(pair_id: &str, raw: &str) -> TeacherTrace {
    let unparseable = || TeacherTrace {
        pair_id: pair_id.to_string(),
        reasoning: String::new(),
        conclusion: String::new(),
        predicted_label: Decision::Unparseable,
        raw: raw.to_string(),
    };
    let Some(map) = json_object(raw) else {
        return unparseable();
    };
    let fields: Option<Vec<String>> = REASONING_KEYS
        .iter()
        .map(|key| map.get(*key).and_then(field_text))
        .collect();
    let Some(mut fields) = fields else {
        return unparseable();
    };
    let conclusion = fields.pop().unwrap_or_default();
    let reasoning = fields.join("\n\n");
    TeacherTrace {
        pair_id: pair_id.to_string(),
        predicted_label: extract_teacher_label(&conclusion),
        reasoning,
        conclusion,
        raw: raw.to_string(),
    }
}

/// The teacher's verdict, read with the same parser used for student outputs.
pub fn extract_teacher_label(conclusion: &str) -> Decision {
    parse_conclusion(conclusion)
}

pub fn agreement(trace: &TeacherTrace, pair: &CodePair) -> AgreementFlag {
    AgreementFlag {
        pair_id: trace.pair_id.clone(),
        delta: u8::from(trace.predicted_label.label() == Some(pair.label)),
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("trace references unknown pair {0}")]
    UnknownPair(String),
}

/// Keeps traces whose verdict equals the ground truth; unparseable verdicts are dropped.
pub fn filter_agreement<'a>(
    traces: &[TeacherTrace],
    pairs: &HashMap<String, &'a CodePair>,
) -> Result<Vec<(&'a CodePair, TeacherTrace)>, FilterError> {
    let mut kept = Vec::new();
    for trace in traces {
        let pair = pairs
            .get(&trace.pair_id)
            .ok_or_else(|| FilterError::UnknownPair(trace.pair_id.clone()))?;
        if agreement(trace, pair).delta == 1 {
            kept.push((*pair, trace.clone()));
        }
    }
    Ok(kept)
}
