//! The five distillation training-set formats.
//!
//! | kind | user prompt | target            |
//! |------|-------------|-------------------|
//! | SR   | simple      | reasoning         |
//! | SC   | simple      | conclusion        |
//! | RR   | reasoning   | reasoning         |
//! | RC   | reasoning   | conclusion        |
//! | RRC  | reasoning   | reasoning + conclusion |

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CodePair;
use crate::prompting::{render_reasoning_prompt, render_simple_prompt};
use crate::teacher::TeacherTrace;

/// Inserted between reasoning and conclusion in RRC targets.
pub const RRC_SEPARATOR: &str = "\n\nConclusion:\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantKind {
    SR,
    SC,
    RR,
    RC,
    RRC,
}

impl VariantKind {
    pub const ALL: [VariantKind; 5] = [
        VariantKind::SR,
        VariantKind::SC,
        VariantKind::RR,
        VariantKind::RC,
        VariantKind::RRC,
    ];

    pub fn uses_reasoning_prompt(self) -> bool {
        !matches!(self, VariantKind::SR | VariantKind::SC)
    }

    fn needs_reasoning(self) -> bool {
        matches!(self, VariantKind::SR | VariantKind::RR | VariantKind::RRC)
    }

    fn needs_conclusion(self) -> bool {
        matches!(self, VariantKind::SC | VariantKind::RC | VariantKind::RRC)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::SR => "SR",
            VariantKind::SC => "SC",
            VariantKind::RR => "RR",
            VariantKind::RC => "RC",
            VariantKind::RRC => "RRC",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VariantKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown variant {s:?}; expected one of SR, SC, RR, RC, RRC"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub pair_id: String,
    pub variant: VariantKind,
    pub user_prompt: String,
    pub target_response: String,
    pub label: u8,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VariantError {
    #[error("pair {pair_id}: {field} is empty but required by {kind}")]
    EmptyTrace {
        pair_id: String,
        kind: VariantKind,
        field: &'static str,
    },
}

/// Renders one training example per retained `(pair, trace)`, in order.
pub fn build_variant(
    retained: &[(&CodePair, TeacherTrace)],
    kind: VariantKind,
) -> Result<Vec<TrainingExample>, VariantError> {
    retained
        .iter()
        .map(|(pair, trace)| {
            let empty = |field| VariantError::EmptyTrace {
                pair_id: pair.pair_id.clone(),
                kind,
                field,
            };
            if kind.needs_reasoning() && trace.reasoning.trim().is_empty() {
                return Err(empty("reasoning"));
            }
            if kind.needs_conclusion() && trace.conclusion.trim().is_empty() {
                return Err(empty("conclusion"));
            }
            let user_prompt = if kind.uses_reasoning_prompt() {
                render_reasoning_prompt(pair)
            } else {
                render_simple_prompt(pair)
            };
            let target_response = match kind {
                VariantKind::SR | VariantKind::RR => trace.reasoning.clone(),
                VariantKind::SC | VariantKind::RC => trace.conclusion.clone(),
                VariantKind::RRC => format!("{}{RRC_SEPARATOR}{}", trace.reasoning, trace.conclusion),
            };
            Ok(TrainingExample {
                pair_id: pair.pair_id.clone(),
                variant: kind,
                user_prompt,
                target_response,
                label: pair.label,
            })
        })
        .collect()
}

/// Recovers `(reasoning, conclusion)` from an RRC target.
pub fn split_rrc(target: &str) -> Option<(&str, &str)> {
    target.rsplit_once(RRC_SEPARATOR)
}

/// Seeded shuffle followed by a train/validation cut.
pub fn split_train_val<T: Clone>(items: &[T], val_fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((items.len() as f64) * val_fraction.clamp(0.0, 1.0)).round() as usize;
    let val = shuffled.split_off(items.len() - n_val);
    (shuffled, val)
}
