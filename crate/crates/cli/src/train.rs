use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mcmi_core::trainer::{load_checkpoint_for, save_checkpoint, MetricsRow, StepOutput, TrainConfig, TrainState};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::data::{prepare, Datasets};
use crate::evaluate::{evaluate_module, read_metrics_csv, write_eval_csv, write_plots, Evaluation, EVAL_FILE};

pub const CONFIG_FILE: &str = "config.toml";
pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_HISTORY_FILE: &str = "eval_history.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";

/// Provenance record written next to the resolved config.
#[derive(Serialize)]
struct RunInfo<'a> {
    code_version: &'a str,
    config_hash: String,
    seed: u64,
    start_step: u64,
}

#[derive(Serialize)]
struct HistoryRow<'a> {
    step: u64,
    metric: &'a str,
    cycle: usize,
    value: f64,
    embedder: &'a str,
}

pub struct TrainOutcome {
    pub dir: PathBuf,
    pub last: Option<StepOutput>,
    pub eval: Evaluation,
    /// Every step's output, in order (both directions per step).
    pub outputs: Vec<StepOutput>,
}

fn comparable(c: &TrainConfig) -> TrainConfig {
    TrainConfig {
        total_steps: 0,
        ..c.clone()
    }
}

fn start_state(cfg: &ExperimentConfig, dir: &Path, resume: bool, data: &Datasets) -> Result<TrainState> {
    let ckpt = dir.join(CHECKPOINT_FILE);
    let occupied = ckpt.exists() || dir.join(METRICS_FILE).exists();
    if occupied && !resume {
        bail!(
            "{} already holds a run; pass --resume to continue it or choose another --out",
            dir.display()
        );
    }
    if resume && ckpt.exists() {
        let st = load_checkpoint_for(&ckpt, &cfg.train)?;
        if comparable(&st.config) != comparable(&cfg.train) {
            bail!("cannot resume: the checkpoint was trained with a different configuration");
        }
        let mut st = st;
        st.config.total_steps = cfg.train.total_steps;
        truncate_metrics(&dir.join(METRICS_FILE), st.step)?;
        return Ok(st);
    }
    let mut st = TrainState::new(cfg.train.clone())?;
    let n = data.train.len().min(cfg.train.anchor_pool_size / 2);
    let idx: Vec<usize> = (0..n).collect();
    st.seed_pools(&data.train.x_batch(&idx)?, &data.train.unpaired_y_batch(&idx)?)?;
    Ok(st)
}

/// Drops rows logged after the checkpoint being resumed from.
fn truncate_metrics(path: &Path, step: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let kept: Vec<MetricsRow> = read_metrics_csv(path)?.into_iter().filter(|r| r.step <= step).collect();
    let mut w = csv::Writer::from_path(path)?;
    for r in kept {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// `train`: runs the configured schedule in `cfg.out_dir`.
pub fn cmd_train(cfg: &ExperimentConfig, resume: bool) -> Result<TrainOutcome> {
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let data = prepare(&cfg.data)?;
    let mut state = start_state(cfg, &dir, resume, &data)?;

    fs::write(dir.join(CONFIG_FILE), cfg.to_toml()?)?;
    let info = RunInfo {
        code_version: env!("CARGO_PKG_VERSION"),
        config_hash: cfg.hash()?,
        seed: cfg.train.seed,
        start_step: state.step,
    };
    fs::write(dir.join(RUN_FILE), serde_json::to_vec_pretty(&info)?)?;

    let metrics_path = dir.join(METRICS_FILE);
    let append = resume && metrics_path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(&metrics_path)?;
    let mut metrics = csv::WriterBuilder::new().has_headers(!append).from_writer(file);
    let history_path = dir.join(EVAL_HISTORY_FILE);
    let hist_file = OpenOptions::new()
        .create(true)
        .append(append)
        .write(true)
        .truncate(!append)
        .open(&history_path)?;
    let mut history = csv::WriterBuilder::new()
        .has_headers(!(append && history_path.metadata()?.len() > 0))
        .from_writer(hist_file);

    let total = cfg.train.total_steps as u64;
    let mut outputs = Vec::new();
    while state.step < total {
        let (ix, iy) = state.sample_indices(data.train.len(), data.train.len());
        let bx = data.train.x_batch(&ix)?;
        let by = data.train.unpaired_y_batch(&iy)?;
        let out = state
            .train_step(&bx, &by)
            .with_context(|| format!("training step {}", state.step + 1))?;
        for row in out.rows() {
            metrics.serialize(row)?;
        }
        if out.step % 100 == 0 {
            let r = &out.reports;
            log::info!(
                "step {}: total {:.4}/{:.4} i_lower {:.3}/{:.3} critic {:.3}",
                out.step,
                r[0].total,
                r[1].total,
                r[0].i_lower,
                r[1].i_lower,
                out.critic_lower
            );
        }
        let step = out.step;
        outputs.push(out);
        let every = cfg.eval.every as u64;
        if every > 0 && step % every == 0 && step < total {
            let e = evaluate_module(&state.backbone, &data.eval, &cfg.eval, &cfg.train.mcmi)?;
            for r in &e.rows {
                history.serialize(HistoryRow {
                    step,
                    metric: &r.metric,
                    cycle: r.cycle,
                    value: r.value,
                    embedder: &r.embedder,
                })?;
            }
            history.flush()?;
        }
        let ck = cfg.eval.checkpoint_every as u64;
        if ck > 0 && step % ck == 0 && step < total {
            metrics.flush()?;
            save_checkpoint(&state, &dir.join(CHECKPOINT_FILE))?;
        }
    }
    metrics.flush()?;
    save_checkpoint(&state, &dir.join(CHECKPOINT_FILE))?;

    let eval = evaluate_module(&state.backbone, &data.eval, &cfg.eval, &cfg.train.mcmi)?;
    for r in &eval.rows {
        history.serialize(HistoryRow {
            step: state.step,
            metric: &r.metric,
            cycle: r.cycle,
            value: r.value,
            embedder: &r.embedder,
        })?;
    }
    history.flush()?;
    write_eval_csv(&dir.join(EVAL_FILE), &eval.rows)?;
    let rows = read_metrics_csv(&metrics_path)?;
    write_plots(&dir, &eval, Some(&rows))?;
    Ok(TrainOutcome {
        dir,
        last: outputs.last().cloned(),
        eval,
        outputs,
    })
}
