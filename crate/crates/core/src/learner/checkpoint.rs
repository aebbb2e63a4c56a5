//! Model checkpoints in the dataset container format.

use super::bc::{BcConfig, BcHead};
use super::cap::{CapConfig, CapParams};
use super::train::{LossConfig, Model, Normalizer};
use super::LearnerError;
use crate::dataset::{decode_container, encode_container, find_chunk, Chunk, DatasetError, FileKind, TAG_META};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const TAG_PARAMS: [u8; 4] = *b"PARM";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointMeta {
    cap: CapConfig,
    bc: BcConfig,
    grid_cells: usize,
    normalizer: Normalizer,
    training: Option<LossConfig>,
    cap_params: usize,
    bc_params: usize,
}

pub fn encode_checkpoint(model: &Model, training: Option<&LossConfig>) -> Vec<u8> {
    let meta = CheckpointMeta {
        cap: model.cap.cfg,
        bc: model.bc.cfg,
        grid_cells: model.grid_cells,
        normalizer: model.norm.clone(),
        training: training.copied(),
        cap_params: model.cap.len(),
        bc_params: model.bc.len(),
    };
    let mut params = Vec::with_capacity(8 * (meta.cap_params + meta.bc_params));
    for v in model.cap.flat().into_iter().chain(model.bc.flat()) {
        params.extend_from_slice(&v.to_le_bytes());
    }
    let chunks = [
        Chunk {
            tag: TAG_META,
            payload: serde_json::to_vec(&meta).expect("checkpoint metadata serializes"),
        },
        Chunk {
            tag: TAG_PARAMS,
            payload: params,
        },
    ];
    encode_container(FileKind::Checkpoint, &chunks)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model, LearnerError> {
    let chunks = decode_container(bytes, FileKind::Checkpoint)?;
    let malformed = |m: String| LearnerError::Dataset(DatasetError::Malformed(m));
    let meta = find_chunk(&chunks, &TAG_META).ok_or_else(|| malformed("checkpoint lacks META".into()))?;
    let meta: CheckpointMeta = serde_json::from_slice(meta).map_err(|e| malformed(format!("checkpoint META: {e}")))?;
    meta.cap.validate()?;
    let raw = find_chunk(&chunks, &TAG_PARAMS).ok_or_else(|| malformed("checkpoint lacks PARM".into()))?;
    let mut cap = CapParams::zeros(meta.cap);
    let mut bc = BcHead::zeros(meta.bc);
    if cap.len() != meta.cap_params || bc.len() != meta.bc_params || raw.len() != 8 * (cap.len() + bc.len()) {
        return Err(malformed("checkpoint parameter count does not match its configuration".into()));
    }
    let values: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    cap.set_flat(&values[..cap.len()])?;
    bc.set_flat(&values[meta.cap_params..])?;
    let model = Model {
        cap,
        bc,
        norm: meta.normalizer,
        grid_cells: meta.grid_cells,
    };
    if !model.is_finite() {
        return Err(LearnerError::NonFinite("checkpoint parameters".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &Model, training: Option<&LossConfig>) -> Result<(), LearnerError> {
    std::fs::write(path, encode_checkpoint(model, training)).map_err(|e| LearnerError::Dataset(DatasetError::io(path, e)))
}

pub fn load_checkpoint(path: &Path) -> Result<Model, LearnerError> {
    let bytes = std::fs::read(path).map_err(|e| LearnerError::Dataset(DatasetError::io(path, e)))?;
    decode_checkpoint(&bytes)
}
