//! Experiment configuration: one TOML file plus `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mcmi_core::synth::ShapePairSpec;
use mcmi_core::trainer::TrainConfig;
use mcmi_core::Domain;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub spec: ShapePairSpec,
    pub train_size: usize,
    /// Held-out paired records, drawn with `eval_seed`.
    pub eval_size: usize,
    pub eval_seed: u64,
    /// Dataset directory; generated from `spec` when it does not exist yet.
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            spec: ShapePairSpec::default(),
            train_size: 512,
            eval_size: 64,
            eval_seed: 1_000_003,
            path: None,
        }
    }
}

/// When and how metrics are computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Evaluate every this many steps (0: only after the last step).
    pub every: usize,
    /// Write a checkpoint every this many steps (0: only after the last step).
    pub checkpoint_every: usize,
    pub cycles: usize,
    /// Domain whose held-out images start the evaluation chains.
    pub source: Domain,
    pub embedder_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            every: 0,
            checkpoint_every: 0,
            cycles: 2,
            source: Domain::Y,
            embedder_seed: 0,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            train: TrainConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            out_dir: default_out_dir(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            );
        }
        self.train.validate()?;
        self.data.spec.validate()?;
        let g = self.data.spec.geometry();
        if self.train.backbone.geometry != g || self.train.critic.geometry != g {
            bail!(
                "data.spec.size gives {g}, but train.backbone.geometry is {} and train.critic.geometry is {}",
                self.train.backbone.geometry,
                self.train.critic.geometry
            );
        }
        if self.data.train_size == 0 || self.data.eval_size < 2 {
            bail!("need data.train_size >= 1 and data.eval_size >= 2");
        }
        if self.eval.cycles == 0 || self.eval.cycles > self.train.mcmi.n_cycles {
            bail!(
                "eval.cycles must lie in 1..={} (train.mcmi.n_cycles)",
                self.train.mcmi.n_cycles
            );
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    /// Hex SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }
}

/// Parses `text`, applies overrides and validates.
pub fn parse(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table: toml::Table = text.parse().context("config is not valid TOML")?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let explicit = |section: &str| {
        table
            .get("train")
            .and_then(|t| t.get(section))
            .and_then(|t| t.get("geometry"))
            .is_some()
    };
    let (backbone_set, critic_set) = (explicit("backbone"), explicit("critic"));
    let mut config: ExperimentConfig = serde_path_to_error::deserialize(toml::Value::Table(table))
        .map_err(|e| anyhow::anyhow!("config key `{}`: {}", e.path(), e.inner()))?;
    let g = config.data.spec.geometry();
    if !backbone_set {
        config.train.backbone.geometry = g;
    }
    if !critic_set {
        config.train.critic.geometry = g;
    }
    config.validate()?;
    Ok(config)
}

/// Reads the config file (defaults when `path` is `None`) and applies overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => format!("schema_version = {SCHEMA_VERSION}\n"),
    };
    parse(&text, overrides)
}

/// Sets a dotted key such as `train.mcmi.alpha=0.25`. The value is read as a
/// TOML value, falling back to a plain string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .with_context(|| format!("override `{spec}` is not of the form key=value"))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` is malformed");
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for (i, p) in parents.iter().enumerate() {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override `{key}`: `{}` is not a table", parts[..=i].join(".")),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
