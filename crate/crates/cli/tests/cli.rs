mod common;

use std::fs;
use std::process::Command;

use common::tiny_config;
use mcmi_cli::ablate::SUMMARY_FILE;
use mcmi_cli::config::parse;
use mcmi_cli::evaluate::{read_metrics_csv, EVAL_FILE, LOSS_PLOT, MARKOVNESS_PLOT};
use mcmi_cli::train::{CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, RUN_FILE};
use mcmi_cli::{cmd_ablate, cmd_evaluate, cmd_train, AblationKind, EvalModel};
use mcmi_core::synth::MANIFEST_FILE;

#[test]
fn train_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&tmp.path().join("run"), &[]);
    let out = cmd_train(&cfg, false).unwrap();
    for f in [
        CONFIG_FILE,
        RUN_FILE,
        METRICS_FILE,
        CHECKPOINT_FILE,
        EVAL_FILE,
        MARKOVNESS_PLOT,
        LOSS_PLOT,
    ] {
        assert!(out.dir.join(f).exists(), "{f} missing");
    }
    let rows = read_metrics_csv(&out.dir.join(METRICS_FILE)).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), [1, 1, 2, 2, 3, 3]);
    assert_eq!(out.outputs.len(), 3);
}

#[test]
fn seeds_control_the_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let read = |name: &str, seed: &str| {
        let cfg = tiny_config(&tmp.path().join(name), &[seed]);
        cmd_train(&cfg, false).unwrap();
        fs::read_to_string(cfg.out_dir.join(METRICS_FILE)).unwrap()
    };
    let a = read("a", "train.seed=5");
    assert_eq!(a, read("b", "train.seed=5"));
    assert_ne!(a, read("c", "train.seed=6"));
}

#[test]
fn override_lands_in_the_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&tmp.path().join("run"), &["train.mcmi.alpha=0.25"]);
    cmd_train(&cfg, false).unwrap();
    let snapshot = fs::read_to_string(cfg.out_dir.join(CONFIG_FILE)).unwrap();
    let back = parse(&snapshot, &[]).unwrap();
    assert_eq!(back.train.mcmi.alpha, 0.25);
    assert_eq!(back, cfg);
    let run: serde_json::Value = serde_json::from_slice(&fs::read(cfg.out_dir.join(RUN_FILE)).unwrap()).unwrap();
    assert_eq!(run["config_hash"], cfg.hash().unwrap());
    assert_eq!(run["seed"], cfg.train.seed);
}

#[test]
fn occupied_run_directory_needs_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&tmp.path().join("run"), &[]);
    cmd_train(&cfg, false).unwrap();
    let err = cmd_train(&cfg, false).err().expect("second run must be refused");
    assert!(err.to_string().contains("--resume"), "{err}");
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let straight = tiny_config(&tmp.path().join("straight"), &["train.total_steps=5"]);
    cmd_train(&straight, false).unwrap();

    let first = tiny_config(&tmp.path().join("resumed"), &["train.total_steps=3"]);
    cmd_train(&first, false).unwrap();
    let rest = tiny_config(&tmp.path().join("resumed"), &["train.total_steps=5"]);
    cmd_train(&rest, true).unwrap();

    let a = fs::read_to_string(straight.out_dir.join(METRICS_FILE)).unwrap();
    let b = fs::read_to_string(rest.out_dir.join(METRICS_FILE)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn resume_rejects_a_changed_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&tmp.path().join("run"), &[]);
    cmd_train(&cfg, false).unwrap();
    let changed = tiny_config(
        &tmp.path().join("run"),
        &["train.mcmi.alpha=0.1", "train.total_steps=4"],
    );
    assert!(cmd_train(&changed, true).is_err());
}

#[test]
fn identity_evaluation_reports_exact_reconstruction() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&tmp.path().join("cfg"), &[]);
    let out = tmp.path().join("eval");
    let eval = cmd_evaluate(&cfg, EvalModel::Identity, None, &out).unwrap();
    for cycle in [1, 2] {
        assert_eq!(eval.eps_mark(cycle), Some(f64::INFINITY), "cycle {cycle}");
    }
    let cycles: Vec<usize> = eval
        .rows
        .iter()
        .filter(|r| r.metric == "eps_mark")
        .map(|r| r.cycle)
        .collect();
    assert_eq!(cycles, [1, 2]);
    let text = fs::read_to_string(out.join(EVAL_FILE)).unwrap();
    assert!(text.lines().any(|l| l.starts_with("eps_mark,1,inf")), "{text}");
    assert!(out.join(MARKOVNESS_PLOT).exists());
}

#[test]
fn checkpoint_evaluation_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(&tmp.path().join("run"), &[]);
    let run = cmd_train(&cfg, false).unwrap();
    let ckpt = run.dir.join(CHECKPOINT_FILE);
    let (a, b) = (tmp.path().join("e1"), tmp.path().join("e2"));
    let ea = cmd_evaluate(&cfg, EvalModel::Checkpoint(&ckpt), None, &a).unwrap();
    cmd_evaluate(&cfg, EvalModel::Checkpoint(&ckpt), None, &b).unwrap();
    assert_eq!(
        fs::read(a.join(EVAL_FILE)).unwrap(),
        fs::read(b.join(EVAL_FILE)).unwrap()
    );
    assert_eq!(ea.rows, run.eval.rows);
    assert!(a.join(LOSS_PLOT).exists());
}

#[test]
fn missing_dataset_is_generated_then_reused() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let data_key = format!("data.path={:?}", data.display().to_string());
    let cfg = tiny_config(&tmp.path().join("a"), &[&data_key]);
    cmd_train(&cfg, false).unwrap();
    assert!(data.join(MANIFEST_FILE).exists());

    let again = tiny_config(&tmp.path().join("b"), &[&data_key]);
    cmd_train(&again, false).unwrap();
    assert_eq!(
        fs::read(cfg.out_dir.join(METRICS_FILE)).unwrap(),
        fs::read(again.out_dir.join(METRICS_FILE)).unwrap()
    );

    let other = tiny_config(&tmp.path().join("c"), &[&data_key, "data.spec.seed=99"]);
    let err = cmd_train(&other, false).err().expect("spec mismatch must be refused");
    assert!(format!("{err:#}").contains("different spec"), "{err:#}");
}

#[test]
fn ablation_records_failures_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tiny_config(&tmp.path().join("abl"), &["train.total_steps=1"]);
    let grid = ["0.1".to_string(), "wide".to_string(), "-0.1".to_string()];
    let rows = cmd_ablate(&base, AblationKind::Margin, Some(&grid)).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].ok() && rows[2].ok());
    assert!(rows[1].status.starts_with("failed"), "{}", rows[1].status);
    assert_eq!(rows[0].chain_length, Some(5));
    let text = fs::read_to_string(base.out_dir.join(SUMMARY_FILE)).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(base.out_dir.join("margin_0.1").join(CHECKPOINT_FILE).exists());
}

fn mcmi() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mcmi"));
    c.env("RUST_LOG", "warn");
    c
}

#[test]
fn binary_reports_config_errors_with_exit_code_two() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "schema_version = 1\n[train]\nlr_gan = 0.1\n").unwrap();
    let out = mcmi().args(["train", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train") && err.contains("lr_gan"), "{err}");
}

#[test]
fn binary_runs_oracle_and_identity_evaluation() {
    let out = mcmi()
        .args(["oracle", "--trials", "10", "--seed", "4"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 violations"));

    let tmp = tempfile::tempdir().unwrap();
    let out = mcmi()
        .args([
            "evaluate",
            "--identity",
            "--override",
            "data.spec.size=16",
            "--override",
            "data.eval_size=4",
        ])
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("eps_mark,2,inf"));
}

#[test]
fn binary_trains_with_seed_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args: Vec<String> = [
        "data.spec.size=16",
        "data.train_size=8",
        "data.eval_size=4",
        "train.total_steps=2",
        "train.backbone.ngf=4",
        "train.backbone.ndf=4",
        "train.critic.widths=[8,8,8,8]",
        "train.mi_batch_size=4",
        "train.anchor_pool_size=16",
    ]
    .iter()
    .flat_map(|o| ["--override".to_string(), o.to_string()])
    .collect();
    args.extend([
        "--seed".into(),
        "9".into(),
        "--out".into(),
        tmp.path().join("r").display().to_string(),
    ]);
    let out = mcmi().arg("train").args(&args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let snapshot = fs::read_to_string(tmp.path().join("r").join(CONFIG_FILE)).unwrap();
    assert_eq!(parse(&snapshot, &[]).unwrap().train.seed, 9);
}
