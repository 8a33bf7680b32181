use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::StabilizeError;
use crate::backend::{encode, Backend, ChatTokenizer};
use crate::prompting::{build_prompt, render_forced_conclusion_prompt};

/// Vocabulary ids whose probabilities are summed into P(yes) and P(no).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTokenSets {
    pub yes_tokens: BTreeSet<u32>,
    pub no_tokens: BTreeSet<u32>,
}

pub const YES_VARIANTS: [&str; 6] = ["Yes", "yes", "YES", " Yes", " yes", " YES"];
pub const NO_VARIANTS: [&str; 6] = ["No", "no", "NO", " No", " no", " NO"];

impl LabelTokenSets {
    pub fn new(yes: impl IntoIterator<Item = u32>, no: impl IntoIterator<Item = u32>) -> Result<Self, StabilizeError> {
        let sets = LabelTokenSets {
            yes_tokens: yes.into_iter().collect(),
            no_tokens: no.into_iter().collect(),
        };
        if sets.yes_tokens.is_empty() || sets.no_tokens.is_empty() {
            return Err(StabilizeError::LabelTokens("yes and no sets must be non-empty".into()));
        }
        if !sets.yes_tokens.is_disjoint(&sets.no_tokens) {
            return Err(StabilizeError::LabelTokens("yes and no sets overlap".into()));
        }
        Ok(sets)
    }

    /// Every case/leading-space variant that the tokenizer encodes as a
    /// single token.
    pub fn from_tokenizer(tokenizer: &dyn ChatTokenizer) -> Result<Self, StabilizeError> {
        let singles = |variants: &[&str]| -> Vec<u32> {
            variants
                .iter()
                .filter_map(|v| match tokenizer.encode_text(v).as_slice() {
                    [id] => Some(*id),
                    _ => None,
                })
                .collect()
        };
        Self::new(singles(&YES_VARIANTS), singles(&NO_VARIANTS))
    }

    pub fn mass(&self, distribution: &[f64]) -> (f64, f64) {
        let sum = |set: &BTreeSet<u32>| set.iter().filter_map(|&t| distribution.get(t as usize)).sum();
        (sum(&self.yes_tokens), sum(&self.no_tokens))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedConfig {
    pub system_prompt: Option<String>,
    /// Cap for the first-stage generation.
    pub max_new_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedOutcome {
    pub label: u8,
    pub first_stage_response: String,
    pub p_yes: f64,
    pub p_no: f64,
}

/// Compares summed probabilities; ties go to 0.
pub fn decide(p_yes: f64, p_no: f64) -> u8 {
    u8::from(p_yes > p_no)
}

/// Two-stage inference: free generation under `user_prompt`, then one
/// forward pass over the forced-conclusion prompt built from that response.
pub fn forced_conclusion(
    backend: &dyn Backend,
    user_prompt: &str,
    label_tokens: &LabelTokenSets,
    config: &ForcedConfig,
) -> Result<ForcedOutcome, StabilizeError> {
    let system = config.system_prompt.as_deref();
    let first = build_prompt(system, user_prompt)?;
    let seq = encode(&first, backend.tokenizer(), backend.max_len()).map_err(crate::backend::BackendError::from)?;
    let response = backend.generate(&seq, config.max_new_tokens)?;

    let second = build_prompt(system, &render_forced_conclusion_prompt(&response))?;
    let seq = encode(&second, backend.tokenizer(), backend.max_len()).map_err(crate::backend::BackendError::from)?;
    let out = backend.forward(&seq)?;
    let (p_yes, p_no) = label_tokens.mass(&out.next_token);
    Ok(ForcedOutcome {
        label: decide(p_yes, p_no),
        first_stage_response: response,
        p_yes,
        p_no,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{tokens, CharTokenizer, TableBackend};

    fn config() -> ForcedConfig {
        ForcedConfig {
            system_prompt: None,
            max_new_tokens: 20,
        }
    }

    #[test]
    fn toy_tokenizer_pins_singletons() {
        let sets = LabelTokenSets::from_tokenizer(&CharTokenizer::new()).unwrap();
        assert_eq!(sets.yes_tokens, BTreeSet::from([tokens::YES]));
        assert_eq!(sets.no_tokens, BTreeSet::from([tokens::NO]));
    }

    #[test]
    fn invalid_sets() {
        assert!(LabelTokenSets::new([1], [1, 2]).is_err());
        assert!(LabelTokenSets::new([], [2]).is_err());
    }

    #[test]
    fn rigged_yes_mass() {
        let backend = TableBackend::new(TableBackend::peaked(tokens::YES, 0.9));
        let sets = LabelTokenSets::from_tokenizer(backend.tokenizer()).unwrap();
        let out = forced_conclusion(&backend, "code a\ncode b", &sets, &config()).unwrap();
        assert_eq!(out.label, 1);
        assert!((out.p_yes - 0.9).abs() < 1e-15);
    }

    #[test]
    fn equal_mass_is_not_clone() {
        let backend = TableBackend::uniform();
        let sets = LabelTokenSets::from_tokenizer(backend.tokenizer()).unwrap();
        let out = forced_conclusion(&backend, "x", &sets, &config()).unwrap();
        assert_eq!(out.p_yes, out.p_no);
        assert_eq!(out.label, 0);
        assert_eq!(decide(0.5, 0.5), 0);
    }

    #[test]
    fn summed_variants() {
        let sets = LabelTokenSets::new([1, 2], [3]).unwrap();
        assert_eq!(sets.mass(&[0.1, 0.2, 0.25, 0.3, 0.15]), (0.45, 0.3));
    }
}
