//! A backend whose next-token distribution is a lookup on the previous
//! token. Used to rig exact probabilities and scripted continuations.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::encode::TokenizedSequence;
use super::lora::LoraConfig;
use super::tensor::Matrix;
use super::tokenizer::{CharTokenizer, ChatTokenizer};
use super::train::TrainConfig;
use super::{argmax, attended_ids, Backend, BackendError, FinetuneReport, ForwardOutput, DEFAULT_MAX_LEN};

#[derive(Debug, Clone)]
pub struct TableBackend {
    tokenizer: CharTokenizer,
    default: Vec<f64>,
    transitions: HashMap<u32, Vec<f64>>,
    embeddings: Matrix,
}

impl TableBackend {
    pub const HIDDEN_DIM: usize = 8;

    /// Every position predicts `default` unless a transition overrides it.
    pub fn new(default: Vec<f64>) -> Self {
        let vocab = CharTokenizer::VOCAB_SIZE;
        assert_eq!(default.len(), vocab, "distribution must cover the vocabulary");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let embeddings = Matrix::from_vec(
            vocab,
            Self::HIDDEN_DIM,
            (0..vocab * Self::HIDDEN_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        TableBackend {
            tokenizer: CharTokenizer::new(),
            default,
            transitions: HashMap::new(),
            embeddings,
        }
    }

    pub fn uniform() -> Self {
        let v = CharTokenizer::VOCAB_SIZE;
        Self::new(vec![1.0 / v as f64; v])
    }

    /// Distribution with `mass` on `token` and the rest spread evenly.
    pub fn peaked(token: u32, mass: f64) -> Vec<f64> {
        let v = CharTokenizer::VOCAB_SIZE;
        let rest = (1.0 - mass) / (v - 1) as f64;
        (0..v as u32).map(|t| if t == token { mass } else { rest }).collect()
    }

    pub fn with_transition(mut self, previous: u32, distribution: Vec<f64>) -> Self {
        assert_eq!(distribution.len(), self.default.len());
        self.transitions.insert(previous, distribution);
        self
    }

    /// After each token of `text`, deterministically predict the next one;
    /// after the last, predict `<|end|>`. Each token of `text` may occur
    /// only once, since the table keys on the previous token alone.
    pub fn scripted(text: &str) -> Self {
        let tokenizer = CharTokenizer::new();
        let ids = tokenizer.encode_text(text);
        let mut backend = Self::uniform();
        let mut prev = super::tokenizer::ASSISTANT;
        for &id in ids.iter().chain(std::iter::once(&super::tokenizer::END)) {
            assert!(!backend.transitions.contains_key(&prev), "{text:?} repeats a token");
            backend = backend.with_transition(prev, Self::peaked(id, 0.99));
            prev = id;
        }
        backend
    }

    fn distribution(&self, previous: u32) -> &[f64] {
        self.transitions.get(&previous).unwrap_or(&self.default)
    }
}

impl Backend for TableBackend {
    fn name(&self) -> String {
        "table".into()
    }

    fn hidden_dim(&self) -> usize {
        Self::HIDDEN_DIM
    }

    fn max_len(&self) -> usize {
        DEFAULT_MAX_LEN
    }

    fn tokenizer(&self) -> &dyn ChatTokenizer {
        &self.tokenizer
    }

    fn forward(&self, seq: &TokenizedSequence) -> Result<ForwardOutput, BackendError> {
        let ids = attended_ids(seq, self.default.len())?;
        let rows: Vec<Vec<f64>> = ids.iter().map(|&id| self.embeddings.row(id as usize).to_vec()).collect();
        Ok(ForwardOutput {
            hidden: Matrix::from_rows(&rows),
            next_token: self.distribution(*ids.last().expect("non-empty")).to_vec(),
        })
    }

    fn generate(&self, seq: &TokenizedSequence, max_new_tokens: usize) -> Result<String, BackendError> {
        let ids = attended_ids(seq, self.default.len())?;
        let stops = self.tokenizer.stop_ids();
        let mut prev = *ids.last().expect("non-empty");
        let mut out = Vec::new();
        while out.len() < max_new_tokens {
            let next = argmax(self.distribution(prev)) as u32;
            out.push(next);
            if stops.contains(&next) {
                break;
            }
            prev = next;
        }
        Ok(self.tokenizer.decode(&out))
    }

    fn lm_loss(&self, seq: &TokenizedSequence) -> Result<f64, BackendError> {
        let ids = attended_ids(seq, self.default.len())?;
        let nll: Vec<f64> = (1..ids.len())
            .filter(|&t| seq.loss_mask[t] == 1)
            .map(|t| -self.distribution(ids[t - 1])[ids[t] as usize].ln())
            .collect();
        if nll.is_empty() {
            return Err(BackendError::NoSupervisedPositions);
        }
        Ok(nll.iter().sum::<f64>() / nll.len() as f64)
    }

    fn parameter_checksum(&self) -> Result<String, BackendError> {
        Ok("table".into())
    }

    fn finetune(
        &self,
        _: &[TokenizedSequence],
        _: &[TokenizedSequence],
        _: &LoraConfig,
        _: &TrainConfig,
        _: Option<&Path>,
    ) -> Result<FinetuneReport, BackendError> {
        Err(BackendError::Unsupported("finetune"))
    }

    fn with_adapter(&self, _: &Path) -> Result<Box<dyn Backend>, BackendError> {
        Err(BackendError::Unsupported("adapters"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::encode;
    use crate::prompting::build_prompt;

    #[test]
    fn scripted_continuation() {
        let b = TableBackend::scripted("maybe.");
        let seq = encode(&build_prompt(None, "x").unwrap(), b.tokenizer(), 64).unwrap();
        assert_eq!(b.generate(&seq, 100).unwrap(), "maybe.");
        assert_eq!(b.generate(&seq, 2).unwrap(), "ma");
    }

    #[test]
    fn rigged_mass() {
        let b = TableBackend::new(TableBackend::peaked(8, 0.9));
        let seq = encode(&build_prompt(None, "x").unwrap(), b.tokenizer(), 64).unwrap();
        let out = b.forward(&seq).unwrap();
        assert!((out.next_token[8] - 0.9).abs() < 1e-15);
        assert!((out.next_token.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
