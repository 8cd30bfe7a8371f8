#![allow(dead_code)]

use std::path::Path;

use mcmi_cli::config::parse;
use mcmi_cli::ExperimentConfig;

/// A 16×16 configuration small enough for a training step in milliseconds.
pub fn tiny_config(out: &Path, extra: &[&str]) -> ExperimentConfig {
    let mut overrides: Vec<String> = [
        "data.spec.size=16",
        "data.train_size=8",
        "data.eval_size=4",
        "train.total_steps=3",
        "train.backbone.ngf=4",
        "train.backbone.ndf=4",
        "train.backbone.residual_blocks=1",
        "train.critic.widths=[8, 8, 8, 8]",
        "train.mi_batch_size=4",
        "train.anchor_pool_size=16",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    overrides.push(format!("out_dir={:?}", out.display().to_string()));
    overrides.extend(extra.iter().map(|s| s.to_string()));
    parse("schema_version = 1\n", &overrides).expect("tiny config is valid")
}
