//! The TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use clonekd::backend::{LoraConfig, PluginConfig, ToyConfig, TrainConfig, DEFAULT_MAX_LEN};
use clonekd::corpus::{Language, SeedPlan};
use clonekd::eval::InvalidPolicy;
use clonekd::prompting::{LossMode, DEFAULT_SYSTEM_PROMPT};
use clonekd::stabilize::{HeadObjective, HeadTrainConfig};
use clonekd::teacher::ClientPolicy;
use clonekd::variants::VariantKind;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_id: String,
    pub output_root: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_system_prompt")]
    pub system_prompt: String,
    pub corpus: CorpusConfig,
    pub pairs: Vec<PairConfig>,
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub variants: VariantsConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub head: HeadSection,
    #[serde(default)]
    pub eval: EvalSection,
}

fn default_seed() -> u64 {
    42
}

fn default_system_prompt() -> String {
    DEFAULT_SYSTEM_PROMPT.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub root: PathBuf,
    pub metadata: PathBuf,
    /// Share of problems held out for the different-distribution test set.
    #[serde(default = "default_dd_fraction")]
    pub dd_fraction: f64,
}

fn default_dd_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub languages: [String; 2],
    pub n_train: usize,
    pub n_sd_test: usize,
    pub n_dd_test: usize,
}

impl PairConfig {
    pub fn name(&self) -> String {
        format!("{}-{}", self.lang1(), self.lang2())
    }

    pub fn lang1(&self) -> Language {
        self.languages[0].parse().unwrap()
    }

    pub fn lang2(&self) -> Language {
        self.languages[1].parse().unwrap()
    }

    pub fn plan(&self) -> SeedPlan {
        SeedPlan {
            n_train: self.n_train,
            n_sd_test: self.n_sd_test,
            n_dd_test: self.n_dd_test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default)]
    pub policy: ClientPolicy,
    #[serde(default)]
    pub scripted: ScriptedConfig,
}

fn default_api_key_env() -> String {
    "CLONEKD_TEACHER_API_KEY".into()
}

fn default_timeout() -> u64 {
    600
}

/// Behaviour of the offline scripted teacher.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScriptedConfig {
    /// Every k-th pair (by sorted id) gets the wrong verdict; 0 disables.
    pub flip_every: usize,
    /// Every k-th pair fails permanently; 0 disables.
    pub fail_every: usize,
    pub fail_all: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantsConfig {
    pub kinds: Vec<VariantKind>,
}

impl Default for VariantsConfig {
    fn default() -> Self {
        VariantsConfig {
            kinds: VariantKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyBackendConfig {
    #[serde(default)]
    pub model: ToyConfig,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default)]
    pub toy: Option<ToyBackendConfig>,
    #[serde(default)]
    pub plugin: Option<PluginConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub variant: VariantKind,
    pub val_fraction: f64,
    pub loss_mode: LossMode,
    pub lora: LoraConfig,
    pub trainer: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            variant: VariantKind::RRC,
            val_fraction: 0.1,
            loss_mode: LossMode::MaskPrompt,
            lora: LoraConfig::default(),
            trainer: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadSection {
    pub objectives: Vec<HeadObjective>,
    pub trainer: HeadTrainConfig,
}

impl Default for HeadSection {
    fn default() -> Self {
        HeadSection {
            objectives: vec![HeadObjective::Bce, HeadObjective::Joint],
            trainer: HeadTrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Generation,
    Forced,
    BinaryHead,
    ContrastiveHead,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Generation, Method::Forced, Method::BinaryHead, Method::ContrastiveHead];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Generation => "generation",
            Method::Forced => "forced",
            Method::BinaryHead => "binary_head",
            Method::ContrastiveHead => "contrastive_head",
        }
    }

    pub fn head_objective(self) -> Option<HeadObjective> {
        match self {
            Method::BinaryHead => Some(HeadObjective::Bce),
            Method::ContrastiveHead => Some(HeadObjective::Joint),
            _ => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneChoice {
    Base,
    Kd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSetChoice {
    Sd,
    Dd,
}

impl TestSetChoice {
    pub fn suffix(self) -> &'static str {
        match self {
            TestSetChoice::Sd => "SD",
            TestSetChoice::Dd => "DD",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            TestSetChoice::Sd => "sd_test.jsonl",
            TestSetChoice::Dd => "dd_test.jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub methods: Vec<Method>,
    pub backbones: Vec<BackboneChoice>,
    pub test_sets: Vec<TestSetChoice>,
    /// Generation cap, shared by the first stage of forced conclusion.
    pub max_new_tokens: usize,
    pub invalid_policy: InvalidPolicy,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            methods: Method::ALL.to_vec(),
            backbones: vec![BackboneChoice::Base, BackboneChoice::Kd],
            test_sets: vec![TestSetChoice::Sd, TestSetChoice::Dd],
            max_new_tokens: 3_000,
            invalid_policy: InvalidPolicy::WrongLabel,
        }
    }
}

impl RunConfig {
    /// Parses `path`, resolving relative paths against its directory, and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.output_root);
        resolve(&mut self.corpus.root);
        resolve(&mut self.corpus.metadata);
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.run_id.is_empty() || !self.run_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
            return bad(format!("run_id {:?} must be non-empty and use only [A-Za-z0-9._-]", self.run_id));
        }
        for (what, path) in [("corpus.root", &self.corpus.root), ("corpus.metadata", &self.corpus.metadata)] {
            if !path.exists() {
                return bad(format!("{what} {} does not exist", path.display()));
            }
        }
        if !(0.0..=1.0).contains(&self.corpus.dd_fraction) {
            return bad(format!("corpus.dd_fraction {} outside [0, 1]", self.corpus.dd_fraction));
        }
        if self.pairs.is_empty() {
            return bad("at least one language pair is required".into());
        }
        for pair in &self.pairs {
            if pair.lang1() == pair.lang2() {
                return bad(format!("pair {} must use two different languages", pair.name()));
            }
            for (what, n) in [("n_train", pair.n_train), ("n_sd_test", pair.n_sd_test), ("n_dd_test", pair.n_dd_test)] {
                if n % 2 != 0 {
                    return bad(format!("pair {}: {what} = {n} must be even", pair.name()));
                }
            }
            if pair.n_train == 0 {
                return bad(format!("pair {}: n_train must be positive", pair.name()));
            }
        }
        if self.teacher.kind == TeacherKind::Http && (self.teacher.endpoint.is_none() || self.teacher.model.is_none()) {
            return bad("teacher.kind = \"http\" needs teacher.endpoint and teacher.model".into());
        }
        self.teacher.policy.validate().map_err(CliError::Config)?;
        if self.variants.kinds.is_empty() {
            return bad("variants.kinds must not be empty".into());
        }
        match (&self.backend.toy, &self.backend.plugin) {
            (Some(toy), None) => toy.model.validate().map_err(CliError::Config)?,
            (None, Some(_)) => {}
            _ => return bad("exactly one of backend.toy and backend.plugin must be set".into()),
        }
        if !(0.0..1.0).contains(&self.train.val_fraction) {
            return bad(format!("train.val_fraction {} outside [0, 1)", self.train.val_fraction));
        }
        self.train.lora.validate().map_err(CliError::Config)?;
        self.train.trainer.validate().map_err(CliError::Config)?;
        self.head.trainer.validate().map_err(CliError::Config)?;
        if self.eval.max_new_tokens == 0 {
            return bad("eval.max_new_tokens must be at least 1".into());
        }
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_root.join(&self.run_id)
    }

    pub fn languages(&self) -> Vec<Language> {
        let mut langs: Vec<Language> = self.pairs.iter().flat_map(|p| [p.lang1(), p.lang2()]).collect();
        langs.sort();
        langs.dedup();
        langs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_dir() -> PathBuf {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
    }

    fn minimal() -> String {
        r#"
run_id = "t"
output_root = "out"

[corpus]
root = "corpus"
metadata = "corpus/metadata.csv"

[[pairs]]
languages = ["Python", "Java"]
n_train = 8
n_sd_test = 4
n_dd_test = 4

[teacher]
kind = "scripted"

[backend.toy]
"#
        .to_string()
    }

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.resolve_paths(&fixture_dir());
        config.validate()?;
        Ok(config)
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let config = parse(&minimal()).unwrap();
        assert_eq!(config.seed, 42);
        assert_eq!(config.train.variant, VariantKind::RRC);
        assert_eq!(config.train.lora, LoraConfig::default());
        assert_eq!(config.eval.methods.len(), 4);
        assert_eq!(config.eval.max_new_tokens, 3_000);
        assert_eq!(config.backend.toy.as_ref().unwrap().max_len, 4096);
        assert_eq!(config.run_dir(), fixture_dir().join("out/t"));
    }

    #[test]
    fn odd_seed_count_rejected() {
        let text = minimal().replace("n_sd_test = 4", "n_sd_test = 3");
        assert!(matches!(parse(&text), Err(CliError::Config(m)) if m.contains("even")));
    }

    #[test]
    fn exactly_one_backend() {
        let none = minimal().replace("[backend.toy]", "[backend]");
        assert!(parse(&none).is_err());
        let both = format!("{}\n[backend.plugin]\ncommand = \"python3\"\n", minimal());
        assert!(parse(&both).is_err());
    }

    #[test]
    fn missing_paths_rejected() {
        let text = minimal().replace("root = \"corpus\"", "root = \"nowhere\"");
        assert!(matches!(parse(&text), Err(CliError::Config(m)) if m.contains("does not exist")));
    }

    #[test]
    fn http_teacher_needs_endpoint() {
        let text = minimal().replace("kind = \"scripted\"", "kind = \"http\"");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal().replace("[teacher]", "[teacher]\ncolour = 1");
        assert!(parse(&text).is_err());
    }
}
