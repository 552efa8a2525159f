//! On-disk format for empirical distributions: a JSON header line followed
//! by one value per line in shortest round-trip exponent notation.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::empirical::{EmpiricalDistribution, Provenance};
use crate::CODE_VERSION;

pub const FORMAT: &str = "wapprox-empirical";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("refusing to write an empty distribution")]
    Empty,
    #[error("unsupported artifact version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("malformed artifact: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub version: u32,
    pub code_version: String,
    pub count: usize,
    pub meta: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

pub fn encode(
    d: &EmpiricalDistribution,
    config: Option<&serde_json::Value>,
) -> Result<String, ArtifactError> {
    if d.is_empty() {
        return Err(ArtifactError::Empty);
    }
    let header = Header {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        code_version: CODE_VERSION.into(),
        count: d.count(),
        meta: d.meta.clone(),
        config: config.cloned(),
    };
    let mut out =
        serde_json::to_string(&header).map_err(|e| ArtifactError::Format(e.to_string()))?;
    out.push('\n');
    for v in d.values() {
        out.push_str(&format!("{v:e}\n"));
    }
    Ok(out)
}

pub fn decode(text: &str) -> Result<(Header, EmpiricalDistribution), ArtifactError> {
    let mut lines = text.lines();
    let first = lines
        .next()
        .ok_or_else(|| ArtifactError::Format("missing header".into()))?;
    let probe: serde_json::Value =
        serde_json::from_str(first).map_err(|e| ArtifactError::Format(format!("header: {e}")))?;
    if probe.get("format").and_then(|f| f.as_str()) != Some(FORMAT) {
        return Err(ArtifactError::Format(format!("not a {FORMAT} artifact")));
    }
    let found = probe
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| ArtifactError::Format("header lacks a version".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(ArtifactError::Version {
            found: found as u32,
        });
    }
    let header: Header =
        serde_json::from_value(probe).map_err(|e| ArtifactError::Format(format!("header: {e}")))?;
    let values = lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| {
                ArtifactError::Format(format!("line {}: `{l}` is not a number", i + 2))
            })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if values.len() != header.count {
        return Err(ArtifactError::Format(format!(
            "header count {} but {} values",
            header.count,
            values.len()
        )));
    }
    let d = EmpiricalDistribution::new(values, header.meta.clone())
        .map_err(|e| ArtifactError::Format(e.to_string()))?;
    Ok((header, d))
}

pub fn write_distribution(
    d: &EmpiricalDistribution,
    path: &Path,
    config: Option<&serde_json::Value>,
) -> Result<(), ArtifactError> {
    let text = encode(d, config)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_distribution(path: &Path) -> Result<(Header, EmpiricalDistribution), ArtifactError> {
    decode(&fs::read_to_string(path)?)
}
