//! Checkpoint directories: `meta.json` plus one TOMN file per parameter and
//! momentum tensor. Parameters are kept at `f32` precision during training,
//! so the round trip is exact.

use std::collections::VecDeque;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dit::ModelConfig;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Mat;
use crate::tomn::TomnTensor;
use crate::trainer::TrainState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RngSnapshot {
    seed: String,
    stream: u64,
    /// `u128` word position as a decimal string.
    word_pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub stage: u8,
    pub step: u64,
    /// Steps completed within `stage`; a run of the same stage resumes here.
    #[serde(default)]
    pub stage_step: u64,
    pub config_digest: String,
    pub model: ModelConfig,
    rng: RngSnapshot,
    pub losses: Vec<f64>,
}

fn write_store(dir: &Path, store: &ParamStore) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, m) in store.iter() {
        let t = TomnTensor::f32(
            vec![m.rows, m.cols],
            m.data.iter().map(|&x| x as f32).collect(),
        );
        t.write(&dir.join(format!("{name}.tomn")))?;
    }
    Ok(())
}

fn read_store(dir: &Path) -> Result<ParamStore> {
    let mut store = ParamStore::new();
    if !dir.exists() {
        return Ok(store);
    }
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        let Some(name) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".tomn"))
            .map(str::to_string)
        else {
            continue;
        };
        let t = TomnTensor::read(&path)?;
        if t.dims.len() != 2 {
            return Err(Error::Checkpoint(format!("{name}: expected rank 2, got {}", t.dims.len())));
        }
        let (dims, data) = t.into_f32(&path)?;
        let data = data.into_iter().map(f64::from).collect();
        let (r, c) = (dims[0], dims[1]);
        store.insert(name, Mat::from_vec(r, c, data));
    }
    Ok(store)
}

pub fn save_checkpoint(
    dir: &Path,
    state: &TrainState,
    cfg: &ModelConfig,
    stage: u8,
    stage_step: u64,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_store(&dir.join("params"), &state.params)?;
    let moments = dir.join("moments");
    if moments.exists() {
        std::fs::remove_dir_all(&moments)?;
    }
    write_store(&moments, &state.moments)?;
    let meta = CheckpointMeta {
        stage,
        step: state.step,
        stage_step,
        config_digest: cfg.digest(),
        model: cfg.clone(),
        rng: RngSnapshot {
            seed: hex::encode(state.rng.get_seed()),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos().to_string(),
        },
        losses: state.losses.iter().copied().collect(),
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join("meta.json");
    let text = std::fs::read_to_string(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile {
            path: path.clone(),
        },
        _ => e.into(),
    })?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads a checkpoint written for `cfg`; a checkpoint for any other model
/// configuration is rejected.
pub fn load_checkpoint(dir: &Path, cfg: &ModelConfig) -> Result<(TrainState, CheckpointMeta)> {
    let meta = read_meta(dir)?;
    let expected = cfg.digest();
    if meta.config_digest != expected {
        return Err(Error::DigestMismatch {
            expected,
            found: meta.config_digest,
        });
    }
    let params = read_store(&dir.join("params"))?;
    if params.is_empty() {
        return Err(Error::Checkpoint(format!("{} holds no parameters", dir.display())));
    }
    let moments = read_store(&dir.join("moments"))?;
    let seed: [u8; 32] = hex::decode(&meta.rng.seed)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| Error::Checkpoint("malformed rng seed".into()))?;
    let word_pos: u128 = meta
        .rng
        .word_pos
        .parse()
        .map_err(|_| Error::Checkpoint("malformed rng word position".into()))?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
    rng.set_stream(meta.rng.stream);
    rng.set_word_pos(word_pos);
    let state = TrainState {
        params,
        moments,
        step: meta.step,
        rng,
        losses: meta.losses.iter().copied().collect::<VecDeque<_>>(),
    };
    Ok((state, meta))
}
