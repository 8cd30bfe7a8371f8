//! One training run per grid point, summarised in a single CSV.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use mcmi_core::engine::{run_chain, BoundVariant};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::data::prepare;
use crate::train::{cmd_train, TrainOutcome};

pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AblationKind {
    Margin,
    Cycles,
    Bounds,
}

impl AblationKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Margin => "margin",
            Self::Cycles => "cycles",
            Self::Bounds => "bounds",
        }
    }

    pub fn default_grid(self) -> Vec<String> {
        let v: &[&str] = match self {
            Self::Margin => &["-0.4", "-0.2", "0", "0.2"],
            Self::Cycles => &["2", "3", "4"],
            Self::Bounds => &["standard", "lower-lower", "non-decreasing", "non-changing"],
        };
        v.iter().map(|s| s.to_string()).collect()
    }

    fn apply(self, cfg: &mut ExperimentConfig, point: &str) -> Result<()> {
        let m = &mut cfg.train.mcmi;
        match self {
            Self::Margin => m.margin = point.parse().with_context(|| format!("margin `{point}`"))?,
            Self::Cycles => m.n_cycles = point.parse().with_context(|| format!("cycle count `{point}`"))?,
            Self::Bounds => m.variant = BoundVariant::from_str(point)?,
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub kind: String,
    pub point: String,
    /// `ok` or the failure message.
    pub status: String,
    pub chain_length: Option<usize>,
    pub steps: Option<u64>,
    pub l_orig: Option<f64>,
    pub l_adv: Option<f64>,
    pub l_mi: Option<f64>,
    pub i_lower: Option<f64>,
    pub total: Option<f64>,
    pub eps_y_c1: Option<f64>,
    pub eps_mark_c1: Option<f64>,
    pub eps_mark_c2: Option<f64>,
}

impl SummaryRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn failed(kind: AblationKind, point: &str, msg: String) -> SummaryRow {
    SummaryRow {
        kind: kind.name().into(),
        point: point.into(),
        status: msg,
        chain_length: None,
        steps: None,
        l_orig: None,
        l_adv: None,
        l_mi: None,
        i_lower: None,
        total: None,
        eps_y_c1: None,
        eps_mark_c1: None,
        eps_mark_c2: None,
    }
}

fn summarise(kind: AblationKind, point: &str, chain_length: usize, run: &TrainOutcome) -> SummaryRow {
    let mut row = failed(kind, point, "ok".into());
    row.chain_length = Some(chain_length);
    if let Some(last) = &run.last {
        let mean = |f: fn(&mcmi_core::engine::LossReport) -> f64| (f(&last.reports[0]) + f(&last.reports[1])) / 2.0;
        row.steps = Some(last.step);
        row.l_orig = Some(mean(|r| r.l_orig));
        row.l_adv = Some(mean(|r| r.l_adv));
        row.l_mi = Some(mean(|r| r.l_mi));
        row.i_lower = Some(mean(|r| r.i_lower));
        row.total = Some(mean(|r| r.total));
    }
    row.eps_y_c1 = run.eval.eps_y(1);
    row.eps_mark_c1 = run.eval.eps_mark(1);
    row.eps_mark_c2 = run.eval.eps_mark(2);
    row
}

fn run_point(base: &ExperimentConfig, kind: AblationKind, point: &str, root: &Path) -> Result<SummaryRow> {
    let mut cfg = base.clone();
    kind.apply(&mut cfg, point)?;
    cfg.out_dir = root.join(format!("{}_{}", kind.name(), point));
    cfg.validate()?;
    let expected = 2 * cfg.train.mcmi.n_cycles + 1;
    let data = prepare(&cfg.data)?;
    let run = cmd_train(&cfg, false)?;
    let probe = data.eval.x_batch(&[0])?;
    let state = mcmi_core::trainer::load_checkpoint(&run.dir.join(crate::train::CHECKPOINT_FILE))?;
    let len = run_chain(&state.backbone, &probe, mcmi_core::Domain::X, &cfg.train.mcmi)?.len();
    if len != expected {
        bail!("chain length {len}, expected {expected}");
    }
    Ok(summarise(kind, point, len, &run))
}

/// Runs every grid point under `base.out_dir`. A failing point is recorded
/// in its summary row and the remaining points still run.
pub fn cmd_ablate(base: &ExperimentConfig, kind: AblationKind, grid: Option<&[String]>) -> Result<Vec<SummaryRow>> {
    let grid: Vec<String> = grid.map_or_else(|| kind.default_grid(), <[String]>::to_vec);
    if grid.is_empty() {
        bail!("empty ablation grid");
    }
    let root = &base.out_dir;
    fs::create_dir_all(root)?;
    let mut rows = Vec::with_capacity(grid.len());
    for point in &grid {
        log::info!("ablation {} = {point}", kind.name());
        let row = run_point(base, kind, point, root).unwrap_or_else(|e| {
            log::error!("ablation {} = {point} failed: {e:#}", kind.name());
            failed(kind, point, format!("failed: {e:#}"))
        });
        rows.push(row);
    }
    let mut w = csv::Writer::from_path(root.join(SUMMARY_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}
