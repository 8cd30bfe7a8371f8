//! Single-file checkpoints: named `f32` tensors plus a JSON manifest.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use mcmi_tensor::{Adam, ParamSet, Tensor};
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backbone::BackboneModule;
use crate::error::{McmiError, Result};
use crate::trainer::{AnchorPool, TrainConfig, TrainState};

pub const CHECKPOINT_FORMAT: &str = "mcmi-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST_KEY: &str = "manifest";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    format_version: u32,
    config_hash: String,
    config: TrainConfig,
    step: u64,
    /// Adam step counts of `[generators, discriminators, critic]`.
    adam_steps: [u64; 3],
    rng: ChaCha8Rng,
    data_rng: ChaCha8Rng,
}

fn err(msg: impl Into<String>) -> McmiError {
    McmiError::Checkpoint(msg.into())
}

fn config_hash(config: &TrainConfig) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(config)?)))
}

struct Blob {
    shape: Vec<usize>,
    bytes: Vec<u8>,
}

fn blob(t: &Tensor<f32>) -> Blob {
    Blob {
        shape: t.shape().to_vec(),
        bytes: t.data().iter().flat_map(|v| v.to_le_bytes()).collect(),
    }
}

fn collect_params(out: &mut Vec<(String, Blob)>, prefix: &str, params: &ParamSet<f32>, adam: &Adam<f32>) {
    for (i, p) in params.iter().enumerate() {
        out.push((format!("{prefix}/{}", p.name), blob(&p.value)));
        out.push((format!("adam/{prefix}/m/{}", p.name), blob(&adam.state.m[i])));
        out.push((format!("adam/{prefix}/v/{}", p.name), blob(&adam.state.v[i])));
    }
}

/// Writes the full training state; the write goes through a temporary file
/// so an interrupted save never leaves a truncated checkpoint behind.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut blobs = Vec::new();
    collect_params(&mut blobs, "gen", state.backbone.generator_params(), &state.opt_gen);
    collect_params(
        &mut blobs,
        "disc",
        state.backbone.discriminator_params(),
        &state.opt_disc,
    );
    collect_params(&mut blobs, "critic", state.critic.params(), &state.opt_critic);
    for (name, pool) in ["x", "y"].iter().zip(&state.pools) {
        let (real, generated) = pool.to_tensors();
        blobs.push((format!("pool/{name}/real"), blob(&real)));
        blobs.push((format!("pool/{name}/generated"), blob(&generated)));
    }
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        format_version: CHECKPOINT_VERSION,
        config_hash: config_hash(&state.config)?,
        config: state.config.clone(),
        step: state.step,
        adam_steps: [state.opt_gen.state.t, state.opt_disc.state.t, state.opt_critic.state.t],
        rng: state.rng.clone(),
        data_rng: state.data_rng.clone(),
    };
    let views = blobs
        .iter()
        .map(|(n, b)| {
            TensorView::new(Dtype::F32, b.shape.clone(), &b.bytes)
                .map(|v| (n.clone(), v))
                .map_err(|e| err(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let meta = HashMap::from([(MANIFEST_KEY.to_string(), serde_json::to_string(&manifest)?)]);
    let bytes = safetensors::serialize(views, Some(meta)).map_err(|e| err(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn read_tensor(st: &SafeTensors<'_>, name: &str, shape: &[usize]) -> Result<Tensor<f32>> {
    let view = st.tensor(name).map_err(|_| err(format!("missing tensor {name}")))?;
    if view.dtype() != Dtype::F32 {
        return Err(err(format!("tensor {name} is {:?}, expected F32", view.dtype())));
    }
    if view.shape() != shape {
        return Err(err(format!(
            "tensor {name} has shape {:?}, expected {shape:?}",
            view.shape()
        )));
    }
    let data = view
        .data()
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(Tensor::from_vec(shape, data)?)
}

fn restore_params(st: &SafeTensors<'_>, prefix: &str, params: &mut ParamSet<f32>, adam: &mut Adam<f32>) -> Result<()> {
    for (i, p) in params.iter_mut().enumerate() {
        let shape = p.value.shape().to_vec();
        p.value = read_tensor(st, &format!("{prefix}/{}", p.name), &shape)?;
        adam.state.m[i] = read_tensor(st, &format!("adam/{prefix}/m/{}", p.name), &shape)?;
        adam.state.v[i] = read_tensor(st, &format!("adam/{prefix}/v/{}", p.name), &shape)?;
    }
    Ok(())
}

fn pool_tensor(st: &SafeTensors<'_>, name: &str) -> Result<Tensor<f32>> {
    let view = st.tensor(name).map_err(|_| err(format!("missing tensor {name}")))?;
    let shape = view.shape().to_vec();
    read_tensor(st, name, &shape)
}

/// Restores a state saved by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = fs::read(path)?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| err(format!("corrupt checkpoint: {e}")))?;
    let (_, metadata) = SafeTensors::read_metadata(&bytes).map_err(|e| err(format!("corrupt checkpoint: {e}")))?;
    let raw = metadata
        .metadata()
        .as_ref()
        .and_then(|m| m.get(MANIFEST_KEY))
        .ok_or_else(|| err("checkpoint has no manifest"))?;
    let manifest: Manifest = serde_json::from_str(raw).map_err(|e| err(format!("bad manifest: {e}")))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(err(format!("not a checkpoint (format {:?})", manifest.format)));
    }
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(err(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            manifest.format_version
        )));
    }
    if config_hash(&manifest.config)? != manifest.config_hash {
        return Err(err("config hash does not match the stored config"));
    }
    let mut state = TrainState::new(manifest.config)?;
    {
        let TrainState {
            backbone,
            critic,
            opt_gen,
            opt_disc,
            opt_critic,
            ..
        } = &mut state;
        restore_params(&st, "gen", backbone.generator_params_mut(), opt_gen)?;
        restore_params(&st, "disc", backbone.discriminator_params_mut(), opt_disc)?;
        restore_params(&st, "critic", critic.params_mut(), opt_critic)?;
    }
    [state.opt_gen.state.t, state.opt_disc.state.t, state.opt_critic.state.t] = manifest.adam_steps;
    let geometry = state.config.backbone.geometry;
    let cap = state.config.anchor_pool_size;
    for (i, name) in ["x", "y"].iter().enumerate() {
        state.pools[i] = AnchorPool::from_tensors(
            geometry,
            cap,
            &pool_tensor(&st, &format!("pool/{name}/real"))?,
            &pool_tensor(&st, &format!("pool/{name}/generated"))?,
        )?;
    }
    state.step = manifest.step;
    state.rng = manifest.rng;
    state.data_rng = manifest.data_rng;
    Ok(state)
}

/// Loads a checkpoint and checks that its networks match `config`.
pub fn load_checkpoint_for(path: &Path, config: &TrainConfig) -> Result<TrainState> {
    let state = load_checkpoint(path)?;
    if state.config.backbone != config.backbone || state.config.critic != config.critic {
        return Err(err(format!(
            "checkpoint networks ({} backbone) do not match the configured ones ({} backbone)",
            state.config.backbone.geometry, config.backbone.geometry
        )));
    }
    Ok(state)
}
