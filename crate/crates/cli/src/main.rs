use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use mcmi_cli::config::{self, ExperimentConfig};
use mcmi_cli::data::cmd_generate_data;
use mcmi_cli::train::CONFIG_FILE;
use mcmi_cli::{cmd_ablate, cmd_evaluate, cmd_oracle, cmd_train, AblationKind, EvalModel, OracleOptions};

#[derive(Parser)]
#[command(
    name = "mcmi",
    version,
    about = "Multi-cycle MI constrained image translation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted `key=value` override, e.g. `train.mcmi.alpha=0.25`. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self, fallback_config: Option<&Path>) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("train.seed={seed}"));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("out_dir={}", toml::Value::String(out.display().to_string())));
        }
        config::load(self.config.as_deref().or(fallback_config), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes checkpoint, metrics CSV, evaluation and plots.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue the run found in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on held-out paired data.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file; its directory's config snapshot is used when --config is absent.
        #[arg(long, required_unless_present = "identity")]
        checkpoint: Option<PathBuf>,
        /// Dataset directory written by `generate-data`; generated from the config otherwise.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of cycles to report.
        #[arg(long)]
        cycles: Option<usize>,
        /// Evaluate identity generators instead of a checkpoint.
        #[arg(long)]
        identity: bool,
    },
    /// Train one model per grid point and write a summary CSV.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: AblationKind,
        /// Comma-separated grid; the standard grid of `kind` when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<String>>,
    },
    /// Check the estimators against exact discrete information.
    Oracle {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random Markov chains; one sandwich joint is drawn per ten chains.
        #[arg(long, default_value_t = 100)]
        trials: usize,
    },
    /// Render a synthetic paired dataset to disk.
    GenerateData {
        #[command(flatten)]
        common: Common,
        /// Number of records.
        #[arg(long, short)]
        n: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train { common, resume } => {
            let cfg = common.resolve(None)?;
            let out = cmd_train(&cfg, resume)?;
            for m in &out.eval.markovness {
                println!(
                    "cycle {}: eps_y {:.5} eps_x {:.5} eps_mark {:.4}",
                    m.cycle, m.eps_y, m.eps_x, m.eps_mark
                );
            }
            println!("run directory: {}", out.dir.display());
            Ok(true)
        }
        Command::Evaluate {
            mut common,
            checkpoint,
            data,
            cycles,
            identity,
        } => {
            let snapshot = checkpoint
                .as_deref()
                .and_then(Path::parent)
                .map(|d| d.join(CONFIG_FILE))
                .filter(|p| p.exists());
            if let Some(c) = cycles {
                common.overrides.push(format!("eval.cycles={c}"));
            }
            let out = common
                .out
                .clone()
                .or_else(|| checkpoint.as_deref().and_then(Path::parent).map(Path::to_path_buf))
                .unwrap_or_else(|| PathBuf::from("."));
            let cfg = common.resolve(snapshot.as_deref())?;
            let model = match (&checkpoint, identity) {
                (_, true) => EvalModel::Identity,
                (Some(p), false) => EvalModel::Checkpoint(p),
                (None, false) => bail!("--checkpoint is required"),
            };
            let eval = cmd_evaluate(&cfg, model, data.as_deref(), &out)?;
            for r in &eval.rows {
                println!("{},{},{},{}", r.metric, r.cycle, r.value, r.embedder);
            }
            Ok(true)
        }
        Command::Ablate { common, kind, grid } => {
            let cfg = common.resolve(None)?;
            let rows = cmd_ablate(&cfg, kind, grid.as_deref())?;
            for r in &rows {
                println!("{} = {}: {}", r.kind, r.point, r.status);
            }
            Ok(rows.iter().all(|r| r.ok()))
        }
        Command::Oracle { seed, trials } => {
            let report = cmd_oracle(&OracleOptions::new(seed, trials))?;
            println!("{}", report.summary());
            Ok(report.passed())
        }
        Command::GenerateData { common, n } => {
            let cfg = common.resolve(None)?;
            let dir = cfg.data.path.clone().unwrap_or_else(|| cfg.out_dir.clone());
            let n = n.unwrap_or(cfg.data.train_size);
            cmd_generate_data(&cfg.data.spec, n, &dir)?;
            println!("wrote {n} records to {}", dir.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
