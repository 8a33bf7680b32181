//! Prompt templates and chat exchanges.

use serde::{Deserialize, Serialize};

use crate::corpus::CodePair;

pub const REASONING_TEMPLATE: &str = include_str!("../templates/reasoning_prompt.txt");
pub const SIMPLE_TEMPLATE: &str = include_str!("../templates/simple_prompt.txt");
pub const FORCED_CONCLUSION_TEMPLATE: &str = include_str!("../templates/forced_conclusion_prompt.txt");

/// Literal line the forced-conclusion prompt ends with.
pub const DECISION_CUE: &str = "- Final Answer (Yes or No):";

/// The five JSON keys the reasoning prompt asks for, in prompt order.
pub const REASONING_KEYS: [&str; 5] = [
    "functionality_comparison",
    "mathematical_logic_comparison",
    "structural_differences",
    "similarity_analysis",
    "conclusion",
];

pub const DEFAULT_SYSTEM_PROMPT: &str = "You are a code clone detection assistant.";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{0} content must not be empty")]
    EmptyContent(Role),
    #[error("malformed exchange: {0}")]
    Malformed(String),
}

/// Substitutes `{name}` placeholders in a single left-to-right pass so that
/// placeholder-like text inside a value is never expanded again.
pub fn render_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let substituted = tail.find('}').and_then(|end| {
            let name = &tail[1..end];
            values
                .iter()
                .find(|(key, _)| *key == name)
                .map(|(_, value)| (end, *value))
        });
        match substituted {
            Some((end, value)) => {
                out.push_str(value);
                rest = &tail[end + 1..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Five-criterion JSON-answer prompt used for teacher queries and reasoning-style student inputs.
pub fn render_reasoning_prompt(pair: &CodePair) -> String {
    render_template(REASONING_TEMPLATE, &[("code1", &pair.code1), ("code2", &pair.code2)])
}

/// Single yes/no question prompt.
pub fn render_simple_prompt(pair: &CodePair) -> String {
    render_template(SIMPLE_TEMPLATE, &[("code1", &pair.code1), ("code2", &pair.code2)])
}

/// Second-stage prompt asking for a one-token verdict on a prior response.
pub fn render_forced_conclusion_prompt(full_response: &str) -> String {
    render_template(FORCED_CONCLUSION_TEMPLATE, &[("full_response", full_response)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// Which positions carry training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// Loss on the assistant span only.
    #[default]
    MaskPrompt,
    /// Loss on every non-padding position.
    FullLoss,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedExchange {
    pub messages: Vec<ChatMessage>,
    pub loss_mode: LossMode,
}

impl RenderedExchange {
    pub fn assistant(&self) -> Option<&ChatMessage> {
        self.messages.iter().find(|m| m.role == Role::Assistant)
    }

    /// True when the exchange can serve as a supervised training example.
    pub fn is_trainable(&self) -> bool {
        self.messages.iter().filter(|m| m.role == Role::Assistant).count() == 1
            && self.messages.last().map(|m| m.role) == Some(Role::Assistant)
    }
}

/// Builds `(system?, user, assistant)`.
pub fn build_exchange(
    system: Option<&str>,
    user: &str,
    assistant: &str,
    loss_mode: LossMode,
) -> Result<RenderedExchange, PromptError> {
    if assistant.is_empty() {
        return Err(PromptError::EmptyContent(Role::Assistant));
    }
    let mut exchange = build_prompt(system, user)?;
    exchange.loss_mode = loss_mode;
    exchange.messages.push(ChatMessage {
        role: Role::Assistant,
        content: assistant.to_string(),
    });
    Ok(exchange)
}

/// Builds an inference-only exchange `(system?, user)` awaiting an assistant turn.
pub fn build_prompt(system: Option<&str>, user: &str) -> Result<RenderedExchange, PromptError> {
    if user.is_empty() {
        return Err(PromptError::EmptyContent(Role::User));
    }
    let mut messages = Vec::with_capacity(3);
    if let Some(system) = system.filter(|s| !s.is_empty()) {
        messages.push(ChatMessage {
            role: Role::System,
            content: system.to_string(),
        });
    }
    messages.push(ChatMessage {
        role: Role::User,
        content: user.to_string(),
    });
    Ok(RenderedExchange {
        messages,
        loss_mode: LossMode::MaskPrompt,
    })
}
