use std::fs;
use std::path::PathBuf;

use clonekd_cli::RunConfig;

#[test]
fn readme_config_parses() {
    let readme = fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../README.md")).unwrap();
    let block = readme.split("```toml\n").nth(1).unwrap().split("```").next().unwrap();
    let config: RunConfig = toml::from_str(block).unwrap();
    assert_eq!(config.pairs[0].n_train, 8000);
    assert_eq!(config.head.trainer.contrastive.temperature, 0.07);
    assert_eq!(config.teacher.policy.max_retries, 2);
}
