use std::path::Path;

use anyhow::{bail, Context, Result};
use mcmi_core::synth::{generate_dataset, load_dataset, save_dataset, ShapeDataset, ShapePairSpec, MANIFEST_FILE};

use crate::config::DataConfig;

/// Training records plus a held-out paired set.
pub struct Datasets {
    pub train: ShapeDataset,
    pub eval: ShapeDataset,
}

pub fn eval_spec(cfg: &DataConfig) -> ShapePairSpec {
    ShapePairSpec {
        seed: cfg.eval_seed,
        ..cfg.spec.clone()
    }
}

/// Loads the dataset at `cfg.path`, generating and saving it first if the
/// directory holds none.
pub fn prepare(cfg: &DataConfig) -> Result<Datasets> {
    let train = match &cfg.path {
        Some(dir) if dir.join(MANIFEST_FILE).exists() => {
            let d = load_dataset(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
            if d.spec != cfg.spec || d.len() != cfg.train_size {
                bail!(
                    "dataset at {} was generated with a different spec or size ({} records); \
                     remove it or point data.path elsewhere",
                    dir.display(),
                    d.len()
                );
            }
            d
        }
        Some(dir) => {
            log::info!("generating {} records into {}", cfg.train_size, dir.display());
            let d = generate_dataset(&cfg.spec, cfg.train_size)?;
            save_dataset(&d, dir)?;
            d
        }
        None => generate_dataset(&cfg.spec, cfg.train_size)?,
    };
    let eval = generate_dataset(&eval_spec(cfg), cfg.eval_size)?;
    Ok(Datasets { train, eval })
}

/// `generate-data`: writes `n` records of `spec` to `dir`.
pub fn cmd_generate_data(spec: &ShapePairSpec, n: usize, dir: &Path) -> Result<()> {
    if dir.join(MANIFEST_FILE).exists() {
        bail!("{} already holds a dataset", dir.display());
    }
    if n == 0 {
        bail!("need at least one record");
    }
    save_dataset(&generate_dataset(spec, n)?, dir)?;
    Ok(())
}
