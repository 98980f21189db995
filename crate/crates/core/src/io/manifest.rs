//! Run manifests: everything needed to reproduce a run bit for bit.
//!
//! The creation timestamp is the one field that differs between identical
//! re-runs; every other artifact a command writes must be byte-identical
//! given the same config and seed.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    /// Outcome-gap threshold resolved during mining, if any.
    pub mined_epsilon: Option<f64>,
    /// Interior bucket cut points per clustered dimension.
    pub bucket_edges: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub software_version: String,
    /// Wall-clock creation time (unix seconds). Informational only; nothing
    /// downstream reads it.
    pub created_unix: u64,
    pub seeds: Vec<u64>,
    /// Full merged configuration the run actually used.
    pub config: serde_json::Value,
    /// SHA-256 of the input dataset file, when the run consumed one.
    pub dataset_sha256: Option<String>,
    pub derived: DerivedQuantities,
}

impl RunManifest {
    pub fn new(command: &str, seeds: Vec<u64>, config: serde_json::Value) -> Self {
        let created_unix =
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        RunManifest {
            command: command.into(),
            software_version: env!("CARGO_PKG_VERSION").into(),
            created_unix,
            seeds,
            config,
            dataset_sha256: None,
            derived: DerivedQuantities::default(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
