use serde::{Deserialize, Serialize};

use super::tokenizer::ChatTokenizer;
use crate::prompting::{LossMode, RenderedExchange, Role};

pub const DEFAULT_MAX_LEN: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSequence {
    pub token_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub loss_mask: Vec<u8>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("assistant span needs {needed} tokens but only {available} fit in max_len {max_len}")]
    AssistantTruncated {
        needed: usize,
        available: usize,
        max_len: usize,
    },
    #[error("prompt needs {needed} non-user tokens but max_len is {max_len}")]
    PromptTooLong { needed: usize, max_len: usize },
    #[error("malformed sequence: {0}")]
    Malformed(String),
}

impl TokenizedSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Number of attended (non-padding) positions.
    pub fn valid_len(&self) -> usize {
        self.attention_mask.iter().take_while(|&&m| m == 1).count()
    }

    pub fn valid_ids(&self) -> &[u32] {
        &self.token_ids[..self.valid_len()]
    }

    pub fn supervised_positions(&self) -> usize {
        self.loss_mask.iter().map(|&m| m as usize).sum()
    }

    /// Right-pads to `len` with `pad_id`.
    pub fn padded(&self, len: usize, pad_id: u32) -> TokenizedSequence {
        let mut out = self.clone();
        if len > out.len() {
            out.token_ids.resize(len, pad_id);
            out.attention_mask.resize(len, 0);
            out.loss_mask.resize(len, 0);
        }
        out
    }

    /// Checks equal lengths, the length cap, right padding, and that loss
    /// never falls on padding.
    pub fn validate(&self, max_len: usize) -> Result<(), EncodeError> {
        let n = self.token_ids.len();
        if self.attention_mask.len() != n || self.loss_mask.len() != n {
            return Err(EncodeError::Malformed("mask lengths differ from token ids".into()));
        }
        if n > max_len {
            return Err(EncodeError::Malformed(format!("length {n} exceeds max_len {max_len}")));
        }
        let valid = self.valid_len();
        if self.attention_mask[valid..].iter().any(|&m| m != 0) {
            return Err(EncodeError::Malformed("attention mask is not right-padded".into()));
        }
        if self.loss_mask.iter().zip(&self.attention_mask).any(|(&l, &a)| l > a) {
            return Err(EncodeError::Malformed("loss on a padding position".into()));
        }
        Ok(())
    }
}

/// Right-pads every sequence to the longest one.
pub fn pad_batch(batch: &[TokenizedSequence], pad_id: u32) -> Vec<TokenizedSequence> {
    let len = batch.iter().map(TokenizedSequence::len).max().unwrap_or(0);
    batch.iter().map(|s| s.padded(len, pad_id)).collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Span {
    Fixed,
    User,
    Assistant,
}

/// Lays out `<bos> [turn]* [<assistant prefix>]` and builds the masks.
///
/// A trainable exchange ends with its assistant turn; loss covers that
/// turn's content and closing tokens. A prompt-only exchange ends with an
/// open assistant turn for generation. When over `max_len`, user content
/// is dropped from the left.
pub fn encode(
    exchange: &RenderedExchange,
    tokenizer: &dyn ChatTokenizer,
    max_len: usize,
) -> Result<TokenizedSequence, EncodeError> {
    let mut segments: Vec<(Vec<u32>, Span)> = Vec::new();
    if let Some(bos) = tokenizer.bos_id() {
        segments.push((vec![bos], Span::Fixed));
    }
    for message in &exchange.messages {
        let content = tokenizer.encode_text(&message.content);
        segments.push((tokenizer.role_prefix(message.role), Span::Fixed));
        match message.role {
            Role::Assistant => {
                segments.push((content, Span::Assistant));
                segments.push((tokenizer.turn_suffix(), Span::Assistant));
            }
            Role::User => {
                segments.push((content, Span::User));
                segments.push((tokenizer.turn_suffix(), Span::Fixed));
            }
            Role::System => {
                segments.push((content, Span::Fixed));
                segments.push((tokenizer.turn_suffix(), Span::Fixed));
            }
        }
    }
    let trainable = exchange.is_trainable();
    if !trainable {
        segments.push((tokenizer.role_prefix(Role::Assistant), Span::Fixed));
    }

    let total: usize = segments.iter().map(|(s, _)| s.len()).sum();
    let mut overflow = total.saturating_sub(max_len);
    if overflow > 0 {
        let user_total: usize = segments
            .iter()
            .filter(|(_, k)| *k == Span::User)
            .map(|(s, _)| s.len())
            .sum();
        if overflow > user_total {
            let fixed = total - user_total;
            return Err(if trainable {
                let needed: usize = segments
                    .iter()
                    .filter(|(_, k)| *k == Span::Assistant)
                    .map(|(s, _)| s.len())
                    .sum();
                EncodeError::AssistantTruncated {
                    needed,
                    available: max_len.saturating_sub(fixed - needed),
                    max_len,
                }
            } else {
                EncodeError::PromptTooLong { needed: fixed, max_len }
            });
        }
        for (tokens, kind) in segments.iter_mut() {
            if *kind == Span::User && overflow > 0 {
                let cut = overflow.min(tokens.len());
                tokens.drain(..cut);
                overflow -= cut;
            }
        }
    }

    let full = exchange.loss_mode == LossMode::FullLoss;
    let mut seq = TokenizedSequence {
        token_ids: Vec::with_capacity(total.min(max_len)),
        attention_mask: Vec::new(),
        loss_mask: Vec::new(),
    };
    for (tokens, kind) in segments {
        let loss = u8::from(full || kind == Span::Assistant);
        seq.attention_mask.extend(std::iter::repeat(1).take(tokens.len()));
        seq.loss_mask.extend(std::iter::repeat(loss).take(tokens.len()));
        seq.token_ids.extend(tokens);
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::tokenizer::{CharTokenizer, ASSISTANT, BOS, END, NO, USER, YES};
    use crate::prompting::{build_exchange, build_prompt};

    #[test]
    fn hand_tokenized_mask_prompt() {
        let t = CharTokenizer::new();
        let ex = build_exchange(None, "ab", "yes", LossMode::MaskPrompt).unwrap();
        let seq = encode(&ex, &t, 64).unwrap();
        // <bos> <user> a b <end> <assistant> yes <end>
        assert_eq!(seq.token_ids, vec![BOS, USER, 10, 11, END, ASSISTANT, YES, END]);
        assert_eq!(seq.loss_mask, vec![0, 0, 0, 0, 0, 0, 1, 1]);
        assert_eq!(seq.attention_mask, vec![1; 8]);
    }

    #[test]
    fn full_loss_matches_attention() {
        let t = CharTokenizer::new();
        let ex = build_exchange(Some("sys"), "code", "no", LossMode::FullLoss).unwrap();
        let seq = encode(&ex, &t, 64).unwrap().padded(40, 0);
        assert_eq!(seq.loss_mask, seq.attention_mask);
        seq.validate(64).unwrap();
    }

    #[test]
    fn left_truncation_of_user_content() {
        let t = CharTokenizer::new();
        let ex = build_exchange(None, "abcdefghij", "no", LossMode::MaskPrompt).unwrap();
        let seq = encode(&ex, &t, 10).unwrap();
        assert_eq!(seq.len(), 10);
        // Six user characters dropped from the front; "ghij" survives.
        assert_eq!(seq.token_ids, vec![BOS, USER, 16, 17, 18, 19, END, ASSISTANT, NO, END]);
        assert_eq!(seq.supervised_positions(), 2);
    }

    #[test]
    fn assistant_never_truncated() {
        let t = CharTokenizer::new();
        let ex = build_exchange(None, "a", "abcdefgh", LossMode::MaskPrompt).unwrap();
        let err = encode(&ex, &t, 8).unwrap_err();
        assert_eq!(err, EncodeError::AssistantTruncated { needed: 9, available: 4, max_len: 8 });
    }

    #[test]
    fn prompt_ends_with_open_assistant_turn() {
        let t = CharTokenizer::new();
        let seq = encode(&build_prompt(None, "a").unwrap(), &t, 64).unwrap();
        assert_eq!(seq.token_ids, vec![BOS, USER, 10, END, ASSISTANT]);
        assert_eq!(seq.supervised_positions(), 0);
    }

    #[test]
    fn padding_is_right_sided() {
        let t = CharTokenizer::new();
        let a = encode(&build_prompt(None, "a").unwrap(), &t, 64).unwrap();
        let b = encode(&build_prompt(None, "abc").unwrap(), &t, 64).unwrap();
        let batch = pad_batch(&[a, b], t.pad_id());
        assert_eq!(batch[0].attention_mask, vec![1, 1, 1, 1, 1, 0, 0]);
        assert_eq!(batch[0].valid_len(), 5);
        assert!(batch.iter().all(|s| s.validate(64).is_ok()));
    }
}
