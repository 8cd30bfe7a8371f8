use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mcmi_core::backbone::translate;
use mcmi_core::engine::{run_chain, MCMIConfig};
use mcmi_core::metrics::{
    frechet_feature_distance, markovness, pairwise_diversity, Embedder, EvalRow, MarkovnessReport, RandomConvEmbedder,
};
use mcmi_core::synth::{generate_dataset, load_dataset, ShapeDataset};
use mcmi_core::trainer::{load_checkpoint, MetricsRow};
use mcmi_core::{BackboneModule, Direction, Domain, IdentityBackbone};

use crate::config::{EvalConfig, ExperimentConfig};
use crate::data::eval_spec;
use crate::plot::{line_plot, Series};
use crate::train::METRICS_FILE;

type MetricField = fn(&MetricsRow) -> f64;

pub const EVAL_FILE: &str = "eval.csv";
pub const MARKOVNESS_PLOT: &str = "markovness.png";
pub const LOSS_PLOT: &str = "losses.png";

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub markovness: Vec<MarkovnessReport>,
    pub rows: Vec<EvalRow>,
}

impl Evaluation {
    /// `eps_mark` of `cycle`, if evaluated.
    pub fn eps_mark(&self, cycle: usize) -> Option<f64> {
        self.markovness.iter().find(|m| m.cycle == cycle).map(|m| m.eps_mark)
    }

    pub fn eps_y(&self, cycle: usize) -> Option<f64> {
        self.markovness.iter().find(|m| m.cycle == cycle).map(|m| m.eps_y)
    }
}

/// Markovness per cycle, Fréchet distance of each cycle's translations to
/// the real target images, and output diversity, all on held-out pairs.
pub fn evaluate_module<M: BackboneModule<f32> + ?Sized>(
    module: &M,
    data: &ShapeDataset,
    cfg: &EvalConfig,
    mcmi: &MCMIConfig,
) -> Result<Evaluation> {
    if module.geometry() != data.geometry() {
        bail!(
            "model geometry {} does not match dataset geometry {}",
            module.geometry(),
            data.geometry()
        );
    }
    if cfg.cycles == 0 {
        bail!("need at least one evaluation cycle");
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let (xs, ys) = (data.x_batch(&idx)?, data.y_batch(&idx)?);
    let (source, target) = match cfg.source {
        Domain::X => (xs, ys),
        Domain::Y => (ys, xs),
    };
    let chain_cfg = MCMIConfig {
        n_cycles: mcmi.n_cycles.max(cfg.cycles),
        ..mcmi.clone()
    };
    let chain = run_chain(module, &source, cfg.source, &chain_cfg)?;
    let embedder = RandomConvEmbedder::new(data.geometry(), cfg.embedder_seed)?;
    let target_feats = embedder.embed(&target)?;
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for cycle in 1..=cfg.cycles {
        let m = markovness(&chain, &target, &source, cycle)?;
        if m.is_infinite() {
            log::warn!("cycle {cycle}: reconstruction is exact, Markovness ratio is infinite");
        }
        rows.extend(m.rows());
        reports.push(m);
        let feats = embedder.embed(chain.translated(cycle))?;
        rows.push(EvalRow {
            metric: "frechet".into(),
            cycle,
            value: frechet_feature_distance(&feats, &target_feats)?,
            embedder: embedder.id().into(),
        });
    }
    let direction = Direction::from_domain(cfg.source);
    let samples = [
        translate(module, &source, direction, None)?,
        translate(module, &source, direction, None)?,
    ];
    rows.push(EvalRow {
        metric: "diversity".into(),
        cycle: 1,
        value: pairwise_diversity(&samples, &embedder)?,
        embedder: embedder.id().into(),
    });
    Ok(Evaluation {
        markovness: reports,
        rows,
    })
}

pub fn write_eval_csv(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Markovness-per-cycle plot, plus loss curves when `metrics` is given.
pub fn write_plots(dir: &Path, eval: &Evaluation, metrics: Option<&[MetricsRow]>) -> Result<()> {
    let points = |f: fn(&MarkovnessReport) -> f64| -> Vec<(f64, f64)> {
        eval.markovness.iter().map(|m| (m.cycle as f64, f(m))).collect()
    };
    line_plot(
        &dir.join(MARKOVNESS_PLOT),
        "Markovness error per cycle",
        "cycle",
        "error",
        &[
            Series {
                name: "eps_mark".into(),
                points: points(|m| m.eps_mark),
            },
            Series {
                name: "eps_y".into(),
                points: points(|m| m.eps_y),
            },
            Series {
                name: "eps_x".into(),
                points: points(|m| m.eps_x),
            },
        ],
    )?;
    if let Some(rows) = metrics {
        let mut series = Vec::new();
        for dir_name in ["x-start", "y-start"] {
            let sel: Vec<&MetricsRow> = rows.iter().filter(|r| r.direction == dir_name).collect();
            let fields: [(&str, MetricField); 4] = [
                ("l_orig", |r| r.l_orig),
                ("l_adv", |r| r.l_adv),
                ("l_mi", |r| r.l_mi),
                ("i_lower", |r| r.i_lower),
            ];
            for (name, f) in fields {
                series.push(Series {
                    name: format!("{dir_name} {name}"),
                    points: smooth(&sel.iter().map(|r| (r.step as f64, f(r))).collect::<Vec<_>>()),
                });
            }
        }
        line_plot(&dir.join(LOSS_PLOT), "Training losses", "step", "value", &series)?;
    }
    Ok(())
}

/// Trailing mean over a window of about 2% of the points.
fn smooth(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let w = (points.len() / 50).max(1);
    points
        .iter()
        .enumerate()
        .map(|(i, &(x, _))| {
            let lo = (i + 1).saturating_sub(w);
            let mean = points[lo..=i].iter().map(|p| p.1).sum::<f64>() / (i + 1 - lo) as f64;
            (x, mean)
        })
        .collect()
}

/// What `evaluate` runs the chains through.
pub enum EvalModel<'a> {
    Checkpoint(&'a Path),
    /// Identity generators; reconstruction is exact by construction.
    Identity,
}

/// `evaluate`: writes `eval.csv` and plots into `out`.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    model: EvalModel<'_>,
    data_dir: Option<&Path>,
    out: &Path,
) -> Result<Evaluation> {
    let data = match data_dir {
        Some(d) => load_dataset(d).with_context(|| format!("loading dataset {}", d.display()))?,
        None => generate_dataset(&eval_spec(&cfg.data), cfg.data.eval_size)?,
    };
    std::fs::create_dir_all(out)?;
    let (eval, metrics) = match model {
        EvalModel::Checkpoint(path) => {
            let state = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            let eval = evaluate_module(&state.backbone, &data, &cfg.eval, &state.config.mcmi)?;
            let metrics_path = path.parent().unwrap_or(Path::new(".")).join(METRICS_FILE);
            let metrics = if metrics_path.exists() {
                Some(read_metrics_csv(&metrics_path)?)
            } else {
                None
            };
            (eval, metrics)
        }
        EvalModel::Identity => {
            let module = IdentityBackbone::<f32>::new(data.geometry(), 0.0);
            (evaluate_module(&module, &data, &cfg.eval, &cfg.train.mcmi)?, None)
        }
    };
    write_eval_csv(&out.join(EVAL_FILE), &eval.rows)?;
    write_plots(out, &eval, metrics.as_deref())?;
    Ok(eval)
}
