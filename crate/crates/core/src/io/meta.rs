//! JSON sidecars (`<file>.meta.json`) and report writing.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::IoError;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn read_sidecar(path: &Path) -> Result<Option<Value>, IoError> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    read_json_value(&side).map(Some)
}

pub fn read_json_value(path: &Path) -> Result<Value, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        path: path.display().to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Merges the top-level keys of `value` into the sidecar of `path`.
pub fn merge_sidecar(path: &Path, value: &Value) -> Result<(), IoError> {
    let mut doc = match read_sidecar(path)? {
        Some(Value::Object(map)) => map,
        _ => Map::new(),
    };
    if let Value::Object(add) = value {
        for (k, v) in add {
            doc.insert(k.clone(), v.clone());
        }
    }
    write_json(&sidecar_path(path), &Value::Object(doc))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| IoError::validation(path.display().to_string(), e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reproducibility record attached to every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest_digest: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Map::is_empty")]
    pub extra: Map<String, Value>,
}

impl Provenance {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool: "panoalign".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: None,
            manifest_digest: None,
            seed: None,
            extra: Map::new(),
        }
    }

    pub fn with_config<T: Serialize>(mut self, config: &T) -> Self {
        self.config = serde_json::to_value(config).ok();
        self
    }

    pub fn with_digest(mut self, digest: impl Into<String>) -> Self {
        self.manifest_digest = Some(digest.into());
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_extra(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.into(), value);
        self
    }

    /// Records this provenance in the sidecar of `output`.
    pub fn attach(&self, output: &Path) -> Result<(), IoError> {
        let value = serde_json::json!({ "provenance": self });
        merge_sidecar(output, &value)
    }
}
