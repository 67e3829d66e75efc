//! Checkpoint files: a single JSON object
//! `{"format": "uwgnn-ckpt", "version": 1, "meta": {...}, "tensors": [...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ParamTensor;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_FORMAT: &str = "uwgnn-ckpt";
pub const CHECKPOINT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub config_digest: String,
    pub epoch: usize,
    /// Total scalar count over all tensors; recomputed on save.
    #[serde(default)]
    pub param_count: usize,
    /// Free-form model description owned by the caller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u64,
    meta: CheckpointMeta,
    tensors: Vec<ParamTensor>,
}

pub fn save_params(tensors: &[ParamTensor], meta: &CheckpointMeta, path: &Path) -> Result<()> {
    for t in tensors {
        t.validate()?;
    }
    let mut meta = meta.clone();
    meta.param_count = tensors.iter().map(ParamTensor::len).sum();
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        meta,
        tensors: tensors.to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::invalid(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn load_params(path: &Path) -> Result<(Vec<ParamTensor>, CheckpointMeta)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&text)
}

/// Parses and validates checkpoint text.
pub fn parse_checkpoint(text: &str) -> Result<(Vec<ParamTensor>, CheckpointMeta)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(CHECKPOINT_FORMAT) => {}
        other => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected format {CHECKPOINT_FORMAT:?}, found {other:?}"),
            })
        }
    }
    let version = value.get("version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing checkpoint version".into(),
    })?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            format: CHECKPOINT_FORMAT,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let file: CheckpointFile = serde_json::from_value(value).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    for t in &file.tensors {
        t.validate()?;
    }
    let count: usize = file.tensors.iter().map(ParamTensor::len).sum();
    if file.meta.param_count != count {
        return Err(Error::Shape {
            context: "checkpoint parameter count",
            expected: file.meta.param_count.to_string(),
            actual: count.to_string(),
        });
    }
    Ok((file.tensors, file.meta))
}
