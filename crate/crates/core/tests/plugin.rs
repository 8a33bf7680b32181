use std::path::PathBuf;

use clonekd::backend::{encode, Backend, BackendError, LoraConfig, PluginBackend, PluginConfig, TrainConfig};
use clonekd::prompting::{build_exchange, build_prompt, LossMode};

fn fixture_config(extra: &[&str]) -> PluginConfig {
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/echo_plugin.py");
    let mut args = vec![script.to_string_lossy().into_owned()];
    args.extend(extra.iter().map(|s| s.to_string()));
    PluginConfig {
        command: "python3".into(),
        args,
    }
}

fn plugin() -> PluginBackend {
    PluginBackend::spawn(&fixture_config(&[])).unwrap()
}

#[test]
fn handshake_and_tokenizer() {
    let backend = plugin();
    assert_eq!(backend.name(), "echo-plugin");
    assert_eq!(backend.hidden_dim(), 4);
    assert_eq!(backend.tokenizer().encode_text("abc"), vec![7, 8, 9]);
    assert_eq!(backend.tokenizer().decode(&[7, 8, 9]), "abc");

    let seq = encode(&build_prompt(None, "ab").unwrap(), backend.tokenizer(), backend.max_len()).unwrap();
    // <bos> <user> a b <end> <assistant>
    assert_eq!(seq.token_ids, vec![1, 4, 7, 8, 6, 5]);
}

#[test]
fn forward_generate_and_loss() {
    let backend = plugin();
    let seq = encode(&build_prompt(None, "ab").unwrap(), backend.tokenizer(), backend.max_len()).unwrap();
    let out = backend.forward(&seq).unwrap();
    assert_eq!(out.hidden.shape(), (6, 4));
    assert!((out.next_token.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // Successor chain from <assistant>=5: 6 is <end>, a stop token.
    assert_eq!(backend.generate(&seq, 10).unwrap(), "");

    let exchange = build_exchange(None, "ab", "cd", LossMode::MaskPrompt).unwrap();
    let seq = encode(&exchange, backend.tokenizer(), backend.max_len()).unwrap();
    // Supervised: c after <assistant> (miss), d after c (hit), <end> after d (miss).
    let hit = (0.5 + 0.5 / 32.0_f64).ln();
    let miss = (0.5 / 32.0_f64).ln();
    let expected = -(2.0 * miss + hit) / 3.0;
    assert!((backend.lm_loss(&seq).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn finetune_and_adapter_reload() {
    let backend = plugin();
    let dir = tempfile::tempdir().unwrap();
    let exchange = build_exchange(None, "ab", "cd", LossMode::MaskPrompt).unwrap();
    let seq = encode(&exchange, backend.tokenizer(), backend.max_len()).unwrap();
    let config = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let report = backend
        .finetune(&[seq], &[], &LoraConfig::default(), &config, Some(dir.path()))
        .unwrap();
    assert_eq!(report.steps, 2);
    let path = report.adapter_path.unwrap();
    assert!(path.exists());
    let adapted = backend.with_adapter(&path).unwrap();
    assert_ne!(adapted.parameter_checksum().unwrap(), backend.parameter_checksum().unwrap());
}

#[test]
fn dead_plugin_is_an_error() {
    let backend = PluginBackend::spawn(&fixture_config(&["--die-after-info"])).unwrap();
    let seq = clonekd::backend::TokenizedSequence {
        token_ids: vec![1, 7],
        attention_mask: vec![1, 1],
        loss_mask: vec![0, 1],
    };
    assert!(matches!(backend.forward(&seq), Err(BackendError::Plugin(_))));
    assert!(backend.tokenizer().encode_text("abc").is_empty());
}

#[test]
fn missing_command_fails_to_spawn() {
    let config = PluginConfig {
        command: "/nonexistent/plugin".into(),
        args: vec![],
    };
    assert!(matches!(PluginBackend::spawn(&config), Err(BackendError::Plugin(_))));
}
