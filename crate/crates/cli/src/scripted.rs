//! Offline teacher answering from ground truth, for fixtures and dry pipelines.

use std::collections::HashMap;

use async_trait::async_trait;
use clonekd::corpus::CodePair;
use clonekd::prompting::REASONING_KEYS;
use clonekd::teacher::{RequestError, TeacherClient, TeacherRequest};
use serde_json::{Map, Value};

use crate::config::ScriptedConfig;

enum Script {
    Answer { says_clone: bool, pair: CodePair },
    Fail,
}

pub struct ScriptedTeacher {
    scripts: HashMap<String, Script>,
}

impl ScriptedTeacher {
    /// Positions are taken over pairs sorted by id, so the script does not
    /// depend on request order.
    pub fn new(pairs: &[CodePair], config: &ScriptedConfig) -> Self {
        let mut sorted: Vec<&CodePair> = pairs.iter().collect();
        sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        let hits = |every: usize, i: usize| every > 0 && (i + 1) % every == 0;
        let scripts = sorted
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let script = if config.fail_all || hits(config.fail_every, i) {
                    Script::Fail
                } else {
                    Script::Answer {
                        says_clone: (p.label == 1) != hits(config.flip_every, i),
                        pair: p.clone(),
                    }
                };
                (p.pair_id.clone(), script)
            })
            .collect();
        ScriptedTeacher { scripts }
    }
}

pub fn scripted_response(pair: &CodePair, says_clone: bool) -> String {
    let lang = |l: &clonekd::corpus::Language| l.as_str().to_string();
    let texts = [
        format!(
            "code 1 is {} reading two numbers and printing one result; code 2 is {} doing the same kind of io.",
            lang(&pair.lang1),
            lang(&pair.lang2)
        ),
        if says_clone {
            "both compute the same formula from the two inputs.".to_string()
        } else {
            "the two formulas differ, so the outputs differ on most inputs.".to_string()
        },
        "the syntax differs only as the two languages require.".to_string(),
        if says_clone { "high".to_string() } else { "low".to_string() },
        if says_clone {
            "yes, the codes are clones.".to_string()
        } else {
            "no, the codes are not clones.".to_string()
        },
    ];
    let map: Map<String, Value> = REASONING_KEYS
        .iter()
        .zip(texts)
        .map(|(k, v)| (k.to_string(), Value::String(v)))
        .collect();
    Value::Object(map).to_string()
}

#[async_trait]
impl TeacherClient for ScriptedTeacher {
    async fn complete(&self, request: &TeacherRequest) -> Result<String, RequestError> {
        match self.scripts.get(&request.pair_id) {
            Some(Script::Answer { says_clone, pair }) => Ok(scripted_response(pair, *says_clone)),
            Some(Script::Fail) => Err(RequestError::Status {
                status: 503,
                body: "scripted failure".into(),
            }),
            None => Err(RequestError::Malformed(format!("no script for {}", request.pair_id))),
        }
    }
}
