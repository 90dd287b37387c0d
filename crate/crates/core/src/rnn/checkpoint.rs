//! Self-describing model files.
//!
//! A checkpoint is one JSON header line followed by the raw parameter blob:
//! every tensor in [`ModelState::tensors`] order, row-major, as little-endian
//! `f64`. The header carries a SHA-256 of the blob.

use super::model::{ModelConfig, ModelState};
use super::RnnError;
use crate::dataset::Vocabulary;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FORMAT_NAME: &str = "cantus-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub format_version: u32,
    pub config: ModelConfig,
    pub vocabulary: Vocabulary,
    pub param_count: usize,
    pub checksum: String,
}

fn checksum(blob: &[u8]) -> String {
    hex::encode(Sha256::digest(blob))
}

fn bad(msg: impl Into<String>) -> RnnError {
    RnnError::Checkpoint(msg.into())
}

pub fn save_checkpoint(model: &ModelState) -> Vec<u8> {
    let blob: Vec<u8> = model.flatten().iter().flat_map(|v| v.to_le_bytes()).collect();
    let header = CheckpointHeader {
        format: FORMAT_NAME.to_string(),
        format_version: FORMAT_VERSION,
        config: model.config,
        vocabulary: model.vocabulary.clone(),
        param_count: model.param_count(),
        checksum: checksum(&blob),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&blob);
    out
}

pub fn read_header(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8]), RnnError> {
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(&bytes[..newline]).map_err(|e| bad(format!("unreadable header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(bad(format!("unknown format `{}`", header.format)));
    }
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "unsupported format version {} (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    Ok((header, &bytes[newline + 1..]))
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<ModelState, RnnError> {
    let (header, blob) = read_header(bytes)?;
    let mut model = ModelState::zeros(header.config, header.vocabulary)?;
    if model.param_count() != header.param_count {
        return Err(bad(format!(
            "header declares {} parameters but the configuration implies {}",
            header.param_count,
            model.param_count()
        )));
    }
    if blob.len() != header.param_count * 8 {
        return Err(bad(format!(
            "parameter blob is {} bytes, expected {}",
            blob.len(),
            header.param_count * 8
        )));
    }
    if checksum(blob) != header.checksum {
        return Err(bad("checksum mismatch"));
    }
    let values: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    model.assign_flat(&values)?;
    Ok(model)
}
