use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A binary clone verdict, or the absence of one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    NotClone,
    Clone,
    Unparseable,
}

impl Decision {
    pub fn from_label(label: u8) -> Self {
        if label == 1 {
            Decision::Clone
        } else {
            Decision::NotClone
        }
    }

    pub fn label(self) -> Option<u8> {
        match self {
            Decision::NotClone => Some(0),
            Decision::Clone => Some(1),
            Decision::Unparseable => None,
        }
    }

    pub fn is_valid(self) -> bool {
        self != Decision::Unparseable
    }
}

impl Serialize for Decision {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self.label() {
            Some(l) => serializer.serialize_u8(l),
            None => serializer.serialize_str("unparseable"),
        }
    }
}

impl<'de> Deserialize<'de> for Decision {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Label(u8),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Label(0) => Ok(Decision::NotClone),
            Raw::Label(1) => Ok(Decision::Clone),
            Raw::Text(t) if t == "unparseable" || t == "invalid" => Ok(Decision::Unparseable),
            _ => Err(serde::de::Error::custom("expected 0, 1 or \"unparseable\"")),
        }
    }
}

/// Characters scanned before falling back to the whole response.
pub const CONCLUSION_WINDOW: usize = 512;

struct Rules {
    negative: Vec<Regex>,
    positive: Vec<Regex>,
}

fn rules() -> &'static Rules {
    static RULES: OnceLock<Rules> = OnceLock::new();
    RULES.get_or_init(|| {
        let compile = |patterns: &[&str]| {
            patterns
                .iter()
                .map(|p| Regex::new(&format!("(?i){p}")).expect("static pattern"))
                .collect()
        };
        Rules {
            negative: compile(&[
                r"\bare\s+not\s+code\s+clones\b",
                r"\bnot\s+(?:a\s+)?(?:code\s+)?clones?\b",
                r"\bnon[-\s]?clones?\b",
                r"\bno\b",
            ]),
            positive: compile(&[
                r"\b(?:are|is)\s+(?:a\s+)?(?:code\s+)?clones?\b",
                r"\bclone\s+pair\b",
                r"\byes\b",
            ]),
        }
    })
}

fn classify(region: &str) -> Decision {
    let rules = rules();
    if rules.negative.iter().any(|r| r.is_match(region)) {
        Decision::NotClone
    } else if rules.positive.iter().any(|r| r.is_match(region)) {
        Decision::Clone
    } else {
        Decision::Unparseable
    }
}

/// Maps a free-form response to a verdict.
///
/// Negation rules run before affirmative rules so that "not clones" never
/// matches the affirmative "clones". The tail of the response is scanned first
/// and the whole text only if the tail is undecided.
pub fn parse_conclusion(text: &str) -> Decision {
    let tail_start = text
        .char_indices()
        .rev()
        .nth(CONCLUSION_WINDOW - 1)
        .map_or(0, |(i, _)| i);
    match classify(&text[tail_start..]) {
        Decision::Unparseable if tail_start > 0 => classify(text),
        decided => decided,
    }
}
