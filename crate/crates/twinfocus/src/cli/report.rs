//! Aggregation of metrics across run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::scenario::{Manifest, MANIFEST_NAME};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub manifests: Vec<String>,
    pub metrics: BTreeMap<String, MetricSummary>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,n,mean,std\n");
        for (k, s) in &self.metrics {
            out.push_str(&format!("{k},{},{:.12e},{:.12e}\n", s.n, s.mean, s.std));
        }
        out
    }
}

/// A manifest path, or a run directory holding `manifest.json`.
fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() { p.join(MANIFEST_NAME) } else { p.to_path_buf() }
}

pub fn load_manifest(p: &Path) -> Result<Manifest> {
    let path = manifest_path(p);
    let bytes = fs::read(&path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Flatten numeric metrics: scalars by name, arrays as `name[i]`, booleans
/// as 0/1.
fn numeric_entries(metrics: &BTreeMap<String, Value>) -> Vec<(String, f64)> {
    let scalar = |v: &Value| match v {
        Value::Number(n) => n.as_f64(),
        Value::Bool(b) => Some(*b as u8 as f64),
        _ => None,
    };
    let mut out = Vec::new();
    for (k, v) in metrics {
        match v {
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    if let Some(x) = scalar(item) {
                        out.push((format!("{k}[{i}]"), x));
                    }
                }
            }
            other => {
                if let Some(x) = scalar(other) {
                    out.push((k.clone(), x));
                }
            }
        }
    }
    out
}

/// Mean and standard deviation of every numeric metric over the manifests.
pub fn report(paths: &[PathBuf]) -> Result<Report> {
    if paths.is_empty() {
        return Err(Error::Config("report needs at least one manifest".into()));
    }
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut names = Vec::with_capacity(paths.len());
    for p in paths {
        let m = load_manifest(p)?;
        for (k, x) in numeric_entries(&m.metrics) {
            values.entry(k).or_default().push(x);
        }
        names.push(manifest_path(p).to_string_lossy().into_owned());
    }
    let metrics = values
        .into_iter()
        .map(|(k, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            (k, MetricSummary { n, mean, std })
        })
        .collect();
    Ok(Report { manifests: names, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flattening_handles_arrays_and_flags() {
        let mut m = BTreeMap::new();
        m.insert("a".to_string(), json!(2.5));
        m.insert("b".to_string(), json!([1, 2]));
        m.insert("c".to_string(), json!(true));
        m.insert("d".to_string(), json!("text"));
        let e = numeric_entries(&m);
        assert_eq!(
            e,
            vec![("a".into(), 2.5), ("b[0]".into(), 1.0), ("b[1]".into(), 2.0), ("c".into(), 1.0)]
        );
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(report(&[]).is_err());
    }

    #[test]
    fn corrupt_manifest_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.json");
        fs::write(&p, b"{not json").unwrap();
        assert!(report(&[p]).is_err());
        assert!(report(&[dir.path().join("missing.json")]).is_err());
    }
}
