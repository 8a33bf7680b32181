use crate::prompting::Role;

/// Text ↔ id mapping plus the ids a chat template needs.
pub trait ChatTokenizer: Send + Sync {
    fn encode_text(&self, text: &str) -> Vec<u32>;
    fn decode(&self, ids: &[u32]) -> String;
    fn vocab_size(&self) -> usize;
    fn pad_id(&self) -> u32;
    fn bos_id(&self) -> Option<u32>;
    /// Ids that end generation.
    fn stop_ids(&self) -> Vec<u32>;
    /// Tokens opening a turn for `role`.
    fn role_prefix(&self, role: Role) -> Vec<u32>;
    /// Tokens closing any turn.
    fn turn_suffix(&self) -> Vec<u32>;
}

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const SYSTEM: u32 = 4;
pub const USER: u32 = 5;
pub const ASSISTANT: u32 = 6;
pub const END: u32 = 7;
pub const YES: u32 = 8;
pub const NO: u32 = 9;

const SPECIALS: [&str; 8] = ["<pad>", "<bos>", "<eos>", "<unk>", "<|system|>", "<|user|>", "<|assistant|>", "<|end|>"];
const WORDS: [&str; 2] = ["yes", "no"];
const CHARS: &str = "abcdefghijklmnopqrstuvwxyz0123456789 \n.,:;()[]{}=+-*/_";
const FIRST_CHAR: u32 = 10;

/// 64-entry character vocabulary with `yes`/`no` word tokens. Input is
/// lowercased; tabs become spaces and anything else unknown maps to `<unk>`.
#[derive(Debug, Clone, Default)]
pub struct CharTokenizer;

impl CharTokenizer {
    pub const VOCAB_SIZE: usize = SPECIALS.len() + WORDS.len() + 54;

    pub fn new() -> Self {
        CharTokenizer
    }

    fn char_id(c: char) -> u32 {
        let c = if c == '\t' { ' ' } else { c };
        CHARS
            .chars()
            .position(|x| x == c)
            .map_or(UNK, |p| FIRST_CHAR + p as u32)
    }

    pub fn token_text(id: u32) -> Option<&'static str> {
        let id = id as usize;
        if id < SPECIALS.len() {
            return Some(SPECIALS[id]);
        }
        if id < SPECIALS.len() + WORDS.len() {
            return Some(WORDS[id - SPECIALS.len()]);
        }
        let p = id - FIRST_CHAR as usize;
        CHARS.get(p..p + 1)
    }
}

impl ChatTokenizer for CharTokenizer {
    fn encode_text(&self, text: &str) -> Vec<u32> {
        let lower: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        let mut ids = Vec::with_capacity(lower.len());
        let mut i = 0;
        'outer: while i < lower.len() {
            for (w, word) in WORDS.iter().enumerate() {
                let n = word.len();
                if i + n <= lower.len() && lower[i..i + n].iter().copied().eq(word.chars()) {
                    ids.push(YES + w as u32);
                    i += n;
                    continue 'outer;
                }
            }
            ids.push(Self::char_id(lower[i]));
            i += 1;
        }
        ids
    }

    fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            match id {
                UNK => out.push('\u{fffd}'),
                _ if (id as usize) < SPECIALS.len() => {}
                _ => out.push_str(Self::token_text(id).unwrap_or("\u{fffd}")),
            }
        }
        out
    }

    fn vocab_size(&self) -> usize {
        Self::VOCAB_SIZE
    }

    fn pad_id(&self) -> u32 {
        PAD
    }

    fn bos_id(&self) -> Option<u32> {
        Some(BOS)
    }

    fn stop_ids(&self) -> Vec<u32> {
        vec![EOS, END]
    }

    fn role_prefix(&self, role: Role) -> Vec<u32> {
        vec![match role {
            Role::System => SYSTEM,
            Role::User => USER,
            Role::Assistant => ASSISTANT,
        }]
    }

    fn turn_suffix(&self) -> Vec<u32> {
        vec![END]
    }
}
