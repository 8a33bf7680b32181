//! Out-of-process backend speaking JSON lines over stdin/stdout.
//!
//! Each request is one line `{"id": n, "method": m, "params": {...}}`; the
//! plugin answers with one line `{"id": n, "result": ...}` or
//! `{"id": n, "error": "..."}`. Methods:
//!
//! | method       | params                                           | result |
//! |--------------|--------------------------------------------------|--------|
//! | `info`       | –                                                | `{name, hidden_dim, max_len, vocab_size, pad_id, bos_id, stop_ids, role_prefix: {system, user, assistant}, turn_suffix}` |
//! | `encode`     | `{text}`                                         | `[id]` |
//! | `decode`     | `{ids}`                                          | text |
//! | `forward`    | `{token_ids, attention_mask, loss_mask}`         | `{hidden: [[f64]], next_token: [f64]}` |
//! | `generate`   | sequence fields + `max_new_tokens`               | text |
//! | `lm_loss`    | sequence fields                                  | f64 |
//! | `checksum`   | –                                                | text |
//! | `finetune`   | `{train, validation, lora, train_config, checkpoints}` | `FinetuneReport` |
//! | `load_adapter` | `{path}`                                       | null |

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::encode::TokenizedSequence;
use super::lora::LoraConfig;
use super::tensor::Matrix;
use super::tokenizer::ChatTokenizer;
use super::train::TrainConfig;
use super::{Backend, BackendError, FinetuneReport, ForwardOutput};
use crate::prompting::Role;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PluginConfig {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
struct RolePrefixes {
    system: Vec<u32>,
    user: Vec<u32>,
    assistant: Vec<u32>,
}

#[derive(Debug, Clone, Deserialize)]
struct PluginInfo {
    name: String,
    hidden_dim: usize,
    max_len: usize,
    vocab_size: usize,
    pad_id: u32,
    bos_id: Option<u32>,
    stop_ids: Vec<u32>,
    role_prefix: RolePrefixes,
    turn_suffix: Vec<u32>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

impl Channel {
    fn call(&mut self, method: &str, params: Value) -> Result<Value, BackendError> {
        self.next_id += 1;
        let id = self.next_id;
        let mut line = serde_json::to_string(&json!({"id": id, "method": method, "params": params}))
            .map_err(|e| BackendError::Plugin(e.to_string()))?;
        line.push('\n');
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|e| BackendError::Plugin(format!("write to plugin failed: {e}")))?;
        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| BackendError::Plugin(format!("read from plugin failed: {e}")))?;
        if n == 0 {
            return Err(BackendError::Plugin(format!("plugin exited during {method}")));
        }
        let mut value: Value =
            serde_json::from_str(&reply).map_err(|e| BackendError::Plugin(format!("bad reply to {method}: {e}")))?;
        if value["id"].as_u64() != Some(id) {
            return Err(BackendError::Plugin(format!("reply id mismatch for {method}")));
        }
        if let Some(err) = value.get("error").filter(|e| !e.is_null()) {
            return Err(BackendError::Plugin(format!("{method}: {}", err.as_str().unwrap_or(&err.to_string()))));
        }
        Ok(value["result"].take())
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct PluginBackend {
    config: PluginConfig,
    info: PluginInfo,
    channel: Mutex<Channel>,
}

fn decode<T: for<'de> Deserialize<'de>>(method: &str, value: Value) -> Result<T, BackendError> {
    serde_json::from_value(value).map_err(|e| BackendError::Plugin(format!("{method} result: {e}")))
}

fn seq_params(seq: &TokenizedSequence) -> Value {
    json!({
        "token_ids": seq.token_ids,
        "attention_mask": seq.attention_mask,
        "loss_mask": seq.loss_mask,
    })
}

impl PluginBackend {
    pub fn spawn(config: &PluginConfig) -> Result<Self, BackendError> {
        let mut child = Command::new(&config.command)
            .args(&config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Plugin(format!("cannot start {}: {e}", config.command)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut channel = Channel {
            child,
            stdin,
            stdout,
            next_id: 0,
        };
        let info: PluginInfo = decode("info", channel.call("info", Value::Null)?)?;
        Ok(PluginBackend {
            config: config.clone(),
            info,
            channel: Mutex::new(channel),
        })
    }

    fn call(&self, method: &str, params: Value) -> Result<Value, BackendError> {
        self.channel
            .lock()
            .map_err(|_| BackendError::Plugin("plugin channel poisoned".into()))?
            .call(method, params)
    }

    fn check(&self, seq: &TokenizedSequence) -> Result<(), BackendError> {
        super::attended_ids(seq, self.info.vocab_size).map(|_| ())
    }
}

impl ChatTokenizer for PluginBackend {
    fn encode_text(&self, text: &str) -> Vec<u32> {
        // The tokenizer interface is infallible; a dead plugin surfaces on the
        // next forward/generate call instead.
        match self.call("encode", json!({ "text": text })).and_then(|v| decode("encode", v)) {
            Ok(ids) => ids,
            Err(e) => {
                log::error!("plugin encode failed: {e}");
                Vec::new()
            }
        }
    }

    fn decode(&self, ids: &[u32]) -> String {
        match self.call("decode", json!({ "ids": ids })).and_then(|v| decode("decode", v)) {
            Ok(text) => text,
            Err(e) => {
                log::error!("plugin decode failed: {e}");
                String::new()
            }
        }
    }

    fn vocab_size(&self) -> usize {
        self.info.vocab_size
    }

    fn pad_id(&self) -> u32 {
        self.info.pad_id
    }

    fn bos_id(&self) -> Option<u32> {
        self.info.bos_id
    }

    fn stop_ids(&self) -> Vec<u32> {
        self.info.stop_ids.clone()
    }

    fn role_prefix(&self, role: Role) -> Vec<u32> {
        match role {
            Role::System => self.info.role_prefix.system.clone(),
            Role::User => self.info.role_prefix.user.clone(),
            Role::Assistant => self.info.role_prefix.assistant.clone(),
        }
    }

    fn turn_suffix(&self) -> Vec<u32> {
        self.info.turn_suffix.clone()
    }
}

#[derive(Deserialize)]
struct WireForward {
    hidden: Vec<Vec<f64>>,
    next_token: Vec<f64>,
}

impl Backend for PluginBackend {
    fn name(&self) -> String {
        self.info.name.clone()
    }

    fn hidden_dim(&self) -> usize {
        self.info.hidden_dim
    }

    fn max_len(&self) -> usize {
        self.info.max_len
    }

    fn tokenizer(&self) -> &dyn ChatTokenizer {
        self
    }

    fn forward(&self, seq: &TokenizedSequence) -> Result<ForwardOutput, BackendError> {
        self.check(seq)?;
        let wire: WireForward = decode("forward", self.call("forward", seq_params(seq))?)?;
        if wire.hidden.iter().any(|r| r.len() != self.info.hidden_dim) {
            return Err(BackendError::Plugin("forward hidden width differs from hidden_dim".into()));
        }
        if wire.next_token.len() != self.info.vocab_size {
            return Err(BackendError::Plugin("forward distribution does not cover the vocabulary".into()));
        }
        Ok(ForwardOutput {
            hidden: Matrix::from_rows(&wire.hidden),
            next_token: wire.next_token,
        })
    }

    fn generate(&self, seq: &TokenizedSequence, max_new_tokens: usize) -> Result<String, BackendError> {
        self.check(seq)?;
        let mut params = seq_params(seq);
        params["max_new_tokens"] = json!(max_new_tokens);
        decode("generate", self.call("generate", params)?)
    }

    fn lm_loss(&self, seq: &TokenizedSequence) -> Result<f64, BackendError> {
        self.check(seq)?;
        if seq.supervised_positions() == 0 {
            return Err(BackendError::NoSupervisedPositions);
        }
        decode("lm_loss", self.call("lm_loss", seq_params(seq))?)
    }

    fn parameter_checksum(&self) -> Result<String, BackendError> {
        decode("checksum", self.call("checksum", Value::Null)?)
    }

    fn finetune(
        &self,
        train: &[TokenizedSequence],
        validation: &[TokenizedSequence],
        lora: &LoraConfig,
        config: &TrainConfig,
        checkpoints: Option<&Path>,
    ) -> Result<FinetuneReport, BackendError> {
        let params = json!({
            "train": train,
            "validation": validation,
            "lora": lora,
            "train_config": config,
            "checkpoints": checkpoints,
        });
        decode("finetune", self.call("finetune", params)?)
    }

    fn with_adapter(&self, adapter_path: &Path) -> Result<Box<dyn Backend>, BackendError> {
        let fresh = PluginBackend::spawn(&self.config)?;
        fresh.call("load_adapter", json!({ "path": adapter_path }))?;
        Ok(Box::new(fresh))
    }
}
