//! Run records, manifests, hashing and summary statistics.
//!
//! Records are stored as JSON lines. Hashes are SHA-256 over a canonical
//! JSON rendering (object keys sorted, shortest round-trip floats), so equal
//! records always hash equally.

use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::error::{Error, Result};

/// Canonical JSON: `serde_json::Value` keeps object keys in sorted order.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_of<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(canonical_json(value)?.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

/// Per-layer quantities measured on the restored (best-validation) model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub beta: f64,
    pub spectral_norm_m_sq: f64,
    /// `β‖M‖²_σ`.
    pub product: f64,
    /// Gate mean per iteration in evaluation mode.
    pub gate_means: Vec<f64>,
    /// `‖X_{t+1} − X_t‖_F` per iteration in evaluation mode.
    pub step_norms: Vec<f64>,
}

/// One training outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub config_key: String,
    pub config_hash: String,
    pub seed: u64,
    pub parameter_count: usize,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub layers: Vec<LayerDiagnostics>,
    pub collapsed: bool,
    pub collapse_epoch: Option<usize>,
}

impl RunRecord {
    pub fn hash(&self) -> Result<String> {
        hash_of(self)
    }

    /// Mean gate value over layers and iterations, if any gates ran.
    pub fn mean_gate(&self) -> Option<f64> {
        let all: Vec<f64> = self.layers.iter().flat_map(|l| l.gate_means.iter().copied()).collect();
        (!all.is_empty()).then(|| all.iter().sum::<f64>() / all.len() as f64)
    }
}

/// Appends records as JSON lines.
pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    for r in records {
        let line = canonical_json(r)?;
        writeln!(f, "{line}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Everything needed to re-run a command bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved configuration text (defaults, file and overrides).
    pub config: String,
    /// Extra command options that affect outputs, as sorted `key=value`.
    pub options: Vec<String>,
    pub data: Vec<String>,
    pub seeds: Vec<u64>,
    pub output_dir: String,
    /// Wall-clock creation time; excluded from the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl RunManifest {
    pub fn hash(&self) -> Result<String> {
        let mut stripped = self.clone();
        stripped.timestamp = None;
        stripped.output_dir.clear();
        hash_of(&stripped)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Mean and sample standard deviation (`None` for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    if values.is_empty() {
        return (f64::NAN, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.len() > 1)
        .then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_sorts_keys() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
        }
        assert_eq!(canonical_json(&S { zeta: 1, alpha: 2 }).unwrap(), r#"{"alpha":2,"zeta":1}"#);
        assert_eq!(sha256_hex(b"").len(), 64);
    }

    #[test]
    fn manifest_hash_ignores_timestamp_and_output_dir() {
        let mut m = RunManifest {
            command: "train".into(),
            config: TrainConfig::default().to_text(),
            options: vec![],
            data: vec!["synthetic:homophilous".into()],
            seeds: vec![0, 1],
            output_dir: "/tmp/a".into(),
            timestamp: Some("now".into()),
        };
        let h = m.hash().unwrap();
        m.timestamp = None;
        m.output_dir = "/tmp/b".into();
        assert_eq!(m.hash().unwrap(), h);
        m.seeds.push(2);
        assert_ne!(m.hash().unwrap(), h);
    }

    #[test]
    fn jsonl_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        append_jsonl(&p, &[EpochMetrics { epoch: 1, train_loss: 0.5, train_acc: 0.1, val_acc: 0.2 }]).unwrap();
        append_jsonl(&p, &[EpochMetrics { epoch: 2, train_loss: 0.25, train_acc: 0.3, val_acc: 0.4 }]).unwrap();
        let back: Vec<EpochMetrics> = read_jsonl(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].epoch, 2);
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[0.5]), (0.5, None));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }
}
