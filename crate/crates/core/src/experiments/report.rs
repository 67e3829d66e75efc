use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub id: usize,
    pub model_rate: f64,
    pub wmmse_rate: f64,
    /// Best of several randomly initialized WMMSE runs, when requested.
    pub best_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    /// Mean of `model_rate / wmmse_rate` over instances with a positive baseline.
    pub mean_ratio: f64,
    /// Population standard deviation of the same ratios.
    pub std: f64,
    pub n_users: usize,
    pub instances: usize,
    pub config_digest: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub per_instance: Vec<InstanceResult>,
    pub summary: ReportSummary,
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl ExperimentReport {
    pub fn new(name: impl Into<String>, per_instance: Vec<InstanceResult>, n_users: usize, config_digest: &str, seed: u64) -> Self {
        let ratios: Vec<f64> = per_instance
            .iter()
            .filter(|r| r.wmmse_rate > 0.0)
            .map(|r| r.model_rate / r.wmmse_rate)
            .collect();
        let (mean_ratio, std) = mean_std(&ratios);
        let instances = per_instance.len();
        Self {
            name: name.into(),
            per_instance,
            summary: ReportSummary {
                mean_ratio,
                std,
                n_users,
                instances,
                config_digest: config_digest.to_string(),
                seed,
            },
        }
    }

    /// Whether every reported number is finite.
    pub fn is_finite(&self) -> bool {
        let s = &self.summary;
        s.mean_ratio.is_finite()
            && s.std.is_finite()
            && self.per_instance.iter().all(|r| {
                r.model_rate.is_finite() && r.wmmse_rate.is_finite() && r.best_rate.is_none_or(f64::is_finite)
            })
    }

    /// One row per instance: `id,model_rate,wmmse_rate,best_rate,ratio`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "model_rate", "wmmse_rate", "best_rate", "ratio"])?;
        for r in &self.per_instance {
            let ratio = if r.wmmse_rate > 0.0 {
                (r.model_rate / r.wmmse_rate).to_string()
            } else {
                String::new()
            };
            w.write_record([
                r.id.to_string(),
                r.model_rate.to_string(),
                r.wmmse_rate.to_string(),
                r.best_rate.map(|b| b.to_string()).unwrap_or_default(),
                ratio,
            ])?;
        }
        w.into_inner().map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Out<'a> {
            name: &'a str,
            #[serde(flatten)]
            summary: &'a ReportSummary,
        }
        let mut s = serde_json::to_string_pretty(&Out {
            name: &self.name,
            summary: &self.summary,
        })
        .map_err(|e| Error::invalid(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `<dir>/<name>-<digest>.csv` and the matching `.json` summary;
    /// returns both paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        let stem = format!("{}-{}", self.name, short_digest(&self.summary.config_digest));
        let csv_path = dir.join(format!("{stem}.csv"));
        let json_path = dir.join(format!("{stem}.json"));
        write_atomic(&csv_path, &self.to_csv()?)?;
        write_atomic(&json_path, self.summary_json()?.as_bytes())?;
        Ok((csv_path, json_path))
    }
}

/// First 12 hex digits of a digest, used in file names.
pub fn short_digest(digest: &str) -> &str {
    &digest[..digest.len().min(12)]
}

/// Mean and spread of a quantity swept over `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub std: f64,
}

/// Writes `x,mean,std` rows.
pub fn curve_csv(points: &[CurvePoint]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "mean", "std"])?;
    for p in points {
        w.write_record([p.x.to_string(), p.mean.to_string(), p.std.to_string()])?;
    }
    w.into_inner().map_err(|e| Error::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, m: f64, w: f64) -> InstanceResult {
        InstanceResult {
            id,
            model_rate: m,
            wmmse_rate: w,
            best_rate: None,
        }
    }

    #[test]
    fn zero_baseline_rows_are_skipped() {
        let r = ExperimentReport::new("t", vec![row(0, 2.0, 1.0), row(1, 1.0, 0.0), row(2, 1.0, 1.0)], 3, "ab", 0);
        assert_eq!(r.summary.mean_ratio, 1.5);
        assert_eq!(r.summary.std, 0.5);
        assert_eq!(r.summary.instances, 3);
    }

    #[test]
    fn csv_layout() {
        let r = ExperimentReport::new("t", vec![row(0, 2.0, 1.0)], 1, "ab", 0);
        let text = String::from_utf8(r.to_csv().unwrap()).unwrap();
        assert_eq!(text, "id,model_rate,wmmse_rate,best_rate,ratio\n0,2,1,,2\n");
        let json: serde_json::Value = serde_json::from_str(&r.summary_json().unwrap()).unwrap();
        assert_eq!(json["config_digest"], "ab");
        assert_eq!(json["name"], "t");
    }
}
