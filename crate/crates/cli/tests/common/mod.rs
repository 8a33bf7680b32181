#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use clonekd_cli::RunConfig;
use tempfile::TempDir;

pub fn fixture_corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden").join(name)
}

/// Ten Python-Java training seeds; the scripted teacher flips two verdicts.
pub const BASE_CONFIG: &str = r#"
run_id = "fixture"
output_root = "out"

[corpus]
root = "{corpus}/"
metadata = "{corpus}/metadata.csv"
dd_fraction = 0.25

[[pairs]]
languages = ["Python", "Java"]
n_train = 10
n_sd_test = 4
n_dd_test = 4

[teacher]
kind = "scripted"
scripted = { flip_every = 5 }

[backend.toy]

[train]
variant = "RRC"
trainer = { epochs = 1, batch_size = 1, grad_accum = 2, learning_rate = 1e-2 }

[head.trainer]
steps = 30
batch_size = 8

[eval]
max_new_tokens = 16
"#;

pub fn render(template: &str, corpus: &Path) -> String {
    template.replace("{corpus}", corpus.to_str().unwrap())
}

/// Writes `text` as `clonekd.toml` in a fresh directory and loads it.
pub fn setup(text: &str) -> (TempDir, RunConfig) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("clonekd.toml");
    fs::write(&path, text).unwrap();
    let config = RunConfig::load(&path).unwrap();
    (dir, config)
}

pub fn base() -> (TempDir, RunConfig) {
    setup(&render(BASE_CONFIG, &fixture_corpus()))
}

pub fn with(replacements: &[(&str, &str)]) -> (TempDir, RunConfig) {
    let mut text = render(BASE_CONFIG, &fixture_corpus());
    for (from, to) in replacements {
        assert!(text.contains(from), "{from:?} not in base config");
        text = text.replace(from, to);
    }
    setup(&text)
}

pub fn lines(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.trim().is_empty()).count()
}

/// Every regular file under `root`, relative, sorted.
pub fn files_under(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(&path, root, out);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    if root.exists() {
        walk(root, root, &mut out);
    }
    out.sort();
    out
}

/// Synthetic corpus with `problems` problems and `per_lang` accepted
/// solutions per language, every source distinct.
pub fn synthetic_corpus(root: &Path, problems: usize, per_lang: usize) {
    let langs = [("Python", "py"), ("Java", "java"), ("Rust", "rs"), ("Ruby", "rb")];
    let mut meta = String::from("submission_id,problem_id,language,status\n");
    for p in 0..problems {
        let problem = format!("q{p:03}");
        for (li, (lang, ext)) in langs.iter().enumerate() {
            let dir = root.join(&problem).join(lang);
            fs::create_dir_all(&dir).unwrap();
            for k in 0..per_lang {
                let sid = format!("t{p:03}{li}{k:02}");
                fs::write(dir.join(format!("{sid}.{ext}")), format!("solve {p} variant {k} in {lang}\n")).unwrap();
                meta.push_str(&format!("{sid},{problem},{lang},Accepted\n"));
            }
        }
    }
    fs::write(root.join("metadata.csv"), meta).unwrap();
}
