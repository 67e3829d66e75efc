//! JSON-lines dataset files.
//!
//! Line 1 is the header `{"format": "d2d-dataset", "version": 1, "seed": <int>}`;
//! every following line is one instance
//! `{"n": <int>, "h": [[...], ...], "lambda": [...], "sigma2": <float>, "p_max": <float>}`
//! with row `i` of `h` holding the gains seen by receiver `i`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::NetworkInstance;
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const DATASET_FORMAT: &str = "d2d-dataset";
pub const DATASET_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u64,
    pub seed: u64,
    /// Digest of the run configuration that produced the file, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
}

impl DatasetHeader {
    pub fn new(seed: u64) -> Self {
        Self {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            seed,
            config_digest: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    n: usize,
    h: Vec<Vec<f64>>,
    lambda: Vec<f64>,
    sigma2: f64,
    p_max: f64,
}

/// Serializes a dataset to JSON-lines text.
pub fn to_jsonl(header: &DatasetHeader, samples: &[NetworkInstance]) -> Result<String> {
    let mut out = serde_json::to_string(header).map_err(|e| Error::invalid(e.to_string()))?;
    out.push('\n');
    for inst in samples {
        let rec = Record {
            n: inst.n_users(),
            h: inst.rows(),
            lambda: inst.lambda().to_vec(),
            sigma2: inst.sigma2(),
            p_max: inst.p_max(),
        };
        out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::invalid(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses JSON-lines text. Any malformed line fails the whole parse.
pub fn parse_jsonl(text: &str) -> Result<(DatasetHeader, Vec<NetworkInstance>)> {
    let mut lines = text.split('\n').enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let raw: serde_json::Value = serde_json::from_str(first.trim_end_matches('\r')).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;
    if raw.get("format").and_then(|f| f.as_str()) != Some(DATASET_FORMAT) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header format is not {DATASET_FORMAT:?}"),
        });
    }
    match raw.get("version").and_then(|v| v.as_u64()) {
        Some(DATASET_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                format: DATASET_FORMAT,
                found,
                expected: DATASET_VERSION,
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "header has no integer version".into(),
            })
        }
    }
    let header: DatasetHeader = serde_json::from_value(raw).map_err(|e| Error::Parse {
        line: 1,
        message: format!("bad header: {e}"),
    })?;

    let mut samples = Vec::new();
    let mut blank_at: Option<usize> = None;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            blank_at.get_or_insert(lineno);
            continue;
        }
        if let Some(b) = blank_at {
            return Err(Error::Parse {
                line: b,
                message: "blank line inside record stream".into(),
            });
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if rec.lambda.len() != rec.n {
            return Err(Error::Parse {
                line: lineno,
                message: format!("n = {} but lambda has {} entries", rec.n, rec.lambda.len()),
            });
        }
        let inst = NetworkInstance::from_rows(&rec.h, rec.lambda, rec.sigma2, rec.p_max).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        samples.push(inst);
    }
    Ok((header, samples))
}

/// SHA-256 over the serialized records (header excluded), hex encoded.
pub fn dataset_digest(samples: &[NetworkInstance]) -> Result<String> {
    let text = to_jsonl(&DatasetHeader::new(0), samples)?;
    let body = text.split_once('\n').map_or("", |(_, rest)| rest);
    Ok(hex::encode(Sha256::digest(body.as_bytes())))
}

pub fn save_dataset(samples: &[NetworkInstance], header: &DatasetHeader, path: &Path) -> Result<()> {
    write_atomic(path, to_jsonl(header, samples)?.as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<(DatasetHeader, Vec<NetworkInstance>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_jsonl(&text)
}
