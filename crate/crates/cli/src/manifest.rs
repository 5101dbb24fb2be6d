use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything needed to re-run a command. Contains no timing or thread
/// information, so it is byte-identical across repeated runs; the wall time
/// goes to `run_manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Canonical config (object keys sorted), after `--seed` was applied.
    pub config: Value,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub format: Format,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub versions: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTiming {
    pub command: String,
    pub wall_time_seconds: f64,
    pub threads: usize,
}

/// `serde_json::Value` keeps object keys in a sorted map, so the compact
/// rendering is already canonical.
pub fn canonical(config: &Value) -> String {
    serde_json::to_string(config).expect("JSON values always serialize")
}

pub fn digest(config: &Value) -> String {
    let hash = Sha256::digest(canonical(config).as_bytes());
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("debias".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("manifest".to_string(), "1".to_string()),
    ])
}

pub fn read(path: &Path) -> Result<RunManifest, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}
