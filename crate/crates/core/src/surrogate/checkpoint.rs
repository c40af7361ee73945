//! Versioned binary checkpoints: magic, version, JSON header, then the raw
//! little-endian f64 tensors in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{CrashSolverConfig, FeatureStats, SurrogateModel};
use super::tape::Mat;
use super::SurrogateError;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: CrashSolverConfig,
    pub stats: FeatureStats,
    pub seed: u64,
    pub tensors: Vec<TensorInfo>,
    /// Free-form data the caller needs to rebuild inputs (vocabularies,
    /// design space, training provenance).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn encode_checkpoint(model: &SurrogateModel, metadata: serde_json::Value) -> Result<Vec<u8>, SurrogateError> {
    let header = CheckpointHeader {
        config: model.config.clone(),
        stats: model.stats,
        seed: model.seed,
        tensors: model
            .names
            .iter()
            .zip(&model.params)
            .map(|(n, p)| TensorInfo { name: n.clone(), shape: [p.rows, p.cols] })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&header).map_err(|e| SurrogateError::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * model.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &model.params {
        for x in &p.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(SurrogateModel, serde_json::Value), SurrogateError> {
    let bad = |m: &str| SurrogateError::Checkpoint(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(SurrogateError::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body).map_err(|e| SurrogateError::Checkpoint(e.to_string()))?;
    let mut off = 12 + hlen;
    let mut tensors = Vec::with_capacity(header.tensors.len());
    for t in &header.tensors {
        let n = t.shape[0] * t.shape[1];
        let raw = bytes.get(off..off + 8 * n).ok_or_else(|| bad("truncated tensor data"))?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(SurrogateError::Checkpoint(format!("tensor {} holds non-finite values", t.name)));
        }
        tensors.push((t.name.clone(), Mat::from_vec(t.shape[0], t.shape[1], data)));
        off += 8 * n;
    }
    if off != bytes.len() {
        return Err(bad("trailing bytes after tensor data"));
    }
    let model = SurrogateModel::from_parts(header.config, header.stats, header.seed, tensors)?;
    Ok((model, header.metadata))
}

pub fn save_checkpoint(model: &SurrogateModel, metadata: serde_json::Value, path: &Path) -> Result<(), SurrogateError> {
    std::fs::write(path, encode_checkpoint(model, metadata)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(SurrogateModel, serde_json::Value), SurrogateError> {
    decode_checkpoint(&std::fs::read(path)?)
}
