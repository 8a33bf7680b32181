mod common;

use std::fs;

use clonekd::backend::{Backend, ToyBackend, ToyConfig};
use clonekd::corpus::{read_jsonl, CodePair, SplitManifest};
use clonekd::eval::reference::DATASET_SUMMARY;
use clonekd::prompting::build_prompt;
use clonekd::stabilize::{train_head, HeadManifest, HeadObjective, HeadTrainConfig};
use clonekd::teacher::TeacherTrace;
use clonekd::variants::{split_rrc, TrainingExample, VariantKind};
use clonekd_cli::commands::{
    cmd_distill, cmd_eval, cmd_report, cmd_seed, cmd_train, cmd_train_head, cmd_variants, dry_run, Layout,
};
use clonekd_cli::CliError;
use common::*;

#[test]
fn seed_writes_declared_counts() {
    let (_dir, config) = base();
    let summary = cmd_seed(&config).unwrap();
    let layout = Layout::new(&config);
    for (file, n) in [("train.jsonl", 10), ("sd_test.jsonl", 4), ("dd_test.jsonl", 4)] {
        let pairs: Vec<CodePair> = read_jsonl(&layout.seed_file("Python-Java", file)).unwrap();
        assert_eq!(pairs.len(), n, "{file}");
        assert_eq!(pairs.iter().filter(|p| p.label == 1).count(), n / 2, "{file} balance");
        assert!(pairs.iter().all(CodePair::is_consistent));
    }
    let manifest: SplitManifest =
        serde_json::from_str(&fs::read_to_string(layout.seed_file("Python-Java", "split_manifest.json")).unwrap())
            .unwrap();
    assert!(manifest.dd_test_problems.is_disjoint(&manifest.train_problems));
    assert_eq!(summary.rows[0].train, 10);
}

#[test]
fn seed_rerun_is_byte_identical() {
    let (_dir, config) = base();
    let root = Layout::new(&config).root.join("seed");
    cmd_seed(&config).unwrap();
    let first: Vec<_> = files_under(&root).iter().map(|f| fs::read(root.join(f)).unwrap()).collect();
    cmd_seed(&config).unwrap();
    let second: Vec<_> = files_under(&root).iter().map(|f| fs::read(root.join(f)).unwrap()).collect();
    assert_eq!(files_under(&root).len(), 4);
    assert_eq!(first, second);
}

#[test]
fn published_scale_seed_counts() {
    let corpus = tempfile::TempDir::new().unwrap();
    synthetic_corpus(corpus.path(), 40, 20);
    let mut text = render(BASE_CONFIG, corpus.path()).replace("dd_fraction = 0.25", "dd_fraction = 0.2");
    let start = text.find("[[pairs]]").unwrap();
    let end = text.find("[teacher]").unwrap();
    let mut pairs = String::new();
    for (name, seeds, _) in DATASET_SUMMARY {
        let (l1, l2) = name.split_once('-').unwrap();
        pairs.push_str(&format!(
            "[[pairs]]\nlanguages = [\"{l1}\", \"{l2}\"]\nn_train = {seeds}\nn_sd_test = 1000\nn_dd_test = 1000\n\n"
        ));
    }
    text.replace_range(start..end, &pairs);
    let (_dir, config) = setup(&text);
    let summary = cmd_seed(&config).unwrap();
    let got: Vec<(String, usize)> = summary.rows.iter().map(|r| (r.pair.clone(), r.train)).collect();
    let want: Vec<(String, usize)> = DATASET_SUMMARY.iter().map(|(n, s, _)| (n.to_string(), *s)).collect();
    assert_eq!(got, want);
    assert_eq!(got.iter().map(|(_, n)| n).sum::<usize>(), 16_000);
    assert!(summary.to_string().contains("| Python-Java   |        10000 |"));
}

#[test]
fn insufficient_corpus_fails_fast() {
    let (_dir, config) = with(&[("n_train = 10", "n_train = 4000")]);
    assert!(matches!(cmd_seed(&config), Err(CliError::Data(_))));
    assert!(!Layout::new(&config).root.exists());
}

#[test]
fn distill_retains_agreeing_traces() {
    let (_dir, config) = base();
    cmd_seed(&config).unwrap();
    let summary = cmd_distill(&config).unwrap();
    let counts = &summary.rows[0].counts;
    assert_eq!((counts.seeds, counts.requested, counts.disagreed, counts.retained), (10, 10, 2, 8));
    let layout = Layout::new(&config);
    let traces: Vec<TeacherTrace> = read_jsonl(&layout.distill_dir("Python-Java").join("retained.jsonl")).unwrap();
    assert_eq!(traces.len(), 8);
    assert_eq!(lines(&layout.distill_dir("Python-Java").join("ledger.jsonl")), 10);
    let shown = summary.to_string();
    assert!(shown.contains("Seed samples") && shown.contains("Retained KD samples"));
}

#[test]
fn distill_resume_issues_no_requests() {
    let (_dir, config) = base();
    cmd_seed(&config).unwrap();
    cmd_distill(&config).unwrap();
    let again = cmd_distill(&config).unwrap();
    let counts = &again.rows[0].counts;
    assert_eq!((counts.requested, counts.reused, counts.retained), (0, 10, 8));
    assert_eq!(lines(&Layout::new(&config).distill_dir("Python-Java").join("ledger.jsonl")), 10);
}

#[test]
fn failing_teacher_exits_with_summary() {
    let (_dir, config) = with(&[("flip_every = 5", "fail_all = true")]);
    cmd_seed(&config).unwrap();
    let mut fast = config.clone();
    fast.teacher.policy.max_retries = 0;
    let err = cmd_distill(&fast).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(err.to_string().contains("Retained KD samples"), "{err}");
    let retained = Layout::new(&config).distill_dir("Python-Java").join("retained.jsonl");
    assert_eq!(lines(&retained), 0);
}

fn through_variants() -> (tempfile::TempDir, clonekd_cli::RunConfig) {
    let (dir, config) = base();
    cmd_seed(&config).unwrap();
    cmd_distill(&config).unwrap();
    cmd_variants(&config).unwrap();
    (dir, config)
}

#[test]
fn variants_write_every_kind() {
    let (_dir, config) = through_variants();
    let layout = Layout::new(&config);
    for kind in VariantKind::ALL {
        let examples: Vec<TrainingExample> = read_jsonl(&layout.variant_file(kind)).unwrap();
        assert_eq!(examples.len(), 8, "{kind}");
        assert!(examples.iter().all(|e| e.variant == kind));
    }
    assert_eq!(files_under(&layout.root.join("variants")).len(), 5);
}

#[test]
fn rrc_golden_example() {
    let (_dir, config) = through_variants();
    let text = fs::read_to_string(Layout::new(&config).variant_file(VariantKind::RRC)).unwrap();
    let first = text.lines().next().unwrap();
    let golden = fs::read_to_string(golden("rrc_first_example.json")).unwrap();
    assert_eq!(first, golden.trim_end());
    let example: TrainingExample = serde_json::from_str(first).unwrap();
    let (reasoning, conclusion) = split_rrc(&example.target_response).unwrap();
    assert!(reasoning.starts_with("code 1 is Python"));
    assert_eq!(conclusion, if example.label == 1 { "yes, the codes are clones." } else { "no, the codes are not clones." });
}

#[test]
fn train_smoke_writes_manifest_with_config_echo() {
    let (_dir, config) = through_variants();
    let manifest = cmd_train(&config).unwrap();
    let layout = Layout::new(&config);
    let on_disk: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(layout.train_dir(VariantKind::RRC).join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(on_disk["config"], serde_json::to_value(&config.train).unwrap());
    assert_eq!(manifest.base_checksum_before, manifest.base_checksum_after);
    assert_ne!(manifest.adapted_checksum, manifest.base_checksum_before);
    assert!(layout.root.join(&manifest.adapter).is_file());
    assert_eq!(manifest.train_examples + manifest.val_examples, 8);
    assert_eq!(manifest.report.steps, 4);
}

#[test]
fn zero_epoch_train_gives_identity_adapter() {
    let (_dir, config) = through_variants();
    let mut zero = config.clone();
    zero.train.trainer.epochs = 0;
    let manifest = cmd_train(&zero).unwrap();
    assert_eq!(manifest.report.steps, 0);
    assert_eq!(manifest.val_loss_base, manifest.val_loss_adapted);
    let base = ToyBackend::new(ToyConfig::default()).unwrap();
    let adapted = base.with_adapter(&Layout::new(&zero).root.join(&manifest.adapter)).unwrap();
    let prompt = build_prompt(None, "fn main() {}").unwrap();
    let seq = clonekd::backend::encode(&prompt, base.tokenizer(), 256).unwrap();
    assert_eq!(base.forward(&seq).unwrap(), adapted.forward(&seq).unwrap());
}

#[test]
fn train_head_both_objectives_keep_backbones_frozen() {
    let (_dir, config) = through_variants();
    cmd_train(&config).unwrap();
    let summary = cmd_train_head(&config).unwrap();
    assert_eq!(summary.rows.len(), 4);
    let layout = Layout::new(&config);
    let base_sum = ToyBackend::new(ToyConfig::default()).unwrap().parameter_checksum().unwrap();
    for backbone in ["base", "kd-RRC"] {
        for objective in [HeadObjective::Bce, HeadObjective::Joint] {
            let dir = layout.head_dir(backbone, objective);
            assert!(dir.join("head.json").is_file());
            let manifest: HeadManifest =
                serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
            assert_eq!(manifest.objective, objective);
            assert_eq!(manifest.backbone_checksum == base_sum, backbone == "base");
        }
    }
    let after = ToyBackend::new(ToyConfig::default()).unwrap().parameter_checksum().unwrap();
    assert_eq!(base_sum, after);
}

#[test]
fn head_on_separable_fixture() {
    let backend = ToyBackend::new(ToyConfig::default()).unwrap();
    let dataset: Vec<_> = (0..40)
        .map(|i| {
            let label = (i % 2) as u8;
            let body = if label == 1 { "a".repeat(8 + i % 5) } else { "z".repeat(8 + i % 5) };
            (build_prompt(None, &body).unwrap(), label)
        })
        .collect();
    for objective in [HeadObjective::Bce, HeadObjective::Joint] {
        let cfg = HeadTrainConfig { objective, ..Default::default() };
        let (_, log) = train_head(&backend, &dataset, &cfg).unwrap();
        assert!(log.train_accuracy >= 0.95, "{objective}: {}", log.train_accuracy);
    }
}

#[test]
fn eval_reports_every_method() {
    let (_dir, mut config) = through_variants();
    config.eval.backbones = vec![clonekd_cli::config::BackboneChoice::Base];
    config.eval.test_sets = vec![clonekd_cli::config::TestSetChoice::Sd];
    cmd_train_head(&config).unwrap();
    let summary = cmd_eval(&config).unwrap();
    let methods: Vec<&str> = summary.reports.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["generation", "forced", "binary_head", "contrastive_head"]);
    for r in &summary.reports {
        assert_eq!(r.n_test, 4);
        assert!(r.wall_time_s > 0.0);
        assert!(r.response_rate <= 100.0);
        if r.method != "generation" {
            assert_eq!(r.response_rate, 100.0, "{}", r.method);
        }
    }
    let layout = Layout::new(&config);
    assert_eq!(lines(&layout.eval_dir().join("reports.jsonl")), 4);
    let report = cmd_report(&config).unwrap();
    assert_eq!(report.comparison.timings.len(), 4);
    assert!(report.timed_table.starts_with(&report.table));
    assert!(layout.report_dir().join("report.md").is_file());
}

#[test]
fn eval_without_heads_is_a_data_error() {
    let (_dir, config) = through_variants();
    let mut cfg = config.clone();
    cfg.eval.backbones = vec![clonekd_cli::config::BackboneChoice::Base];
    assert!(matches!(cmd_eval(&cfg), Err(CliError::Data(m)) if m.contains("train-head")));
}

#[test]
fn dry_run_writes_nothing() {
    let (dir, config) = base();
    let summary = dry_run(&config).unwrap();
    assert_eq!(summary.rows[0].train, 10);
    assert_eq!(files_under(dir.path()), vec![std::path::PathBuf::from("clonekd.toml")]);
}

#[test]
fn runs_are_isolated_by_run_id() {
    let (_dir, config) = base();
    cmd_seed(&config).unwrap();
    let first = Layout::new(&config).root;
    let before: Vec<_> = files_under(&first).iter().map(|f| fs::read(first.join(f)).unwrap()).collect();
    let mut other = config.clone();
    other.run_id = "other".into();
    other.seed = 7;
    cmd_seed(&other).unwrap();
    let after: Vec<_> = files_under(&first).iter().map(|f| fs::read(first.join(f)).unwrap()).collect();
    assert_eq!(before, after);
    assert!(Layout::new(&other).root.join("seed").is_dir());
}
