//! Run manifests and content digests.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{ClimdError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the compact JSON encoding; object keys come out in insertion
/// order for derived `Serialize` and sorted for `json!` maps.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    digest_bytes(&serde_json::to_vec(value).expect("JSON encoding of plain data"))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| ClimdError::io(format!("reading {}", path.display()), e))?;
    Ok(digest_bytes(&bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to reproduce one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub config_digest: String,
    pub inputs: Vec<InputDigest>,
    pub seeds: Vec<u64>,
    pub tool_version: String,
    /// Seconds since the Unix epoch; the only field allowed to differ between reruns.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            command: command.to_string(),
            config_digest: digest_json(&config),
            config,
            inputs: Vec::new(),
            seeds,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: digest_file(path)?,
        });
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            digest_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn config_digest_ignores_timestamp() {
        let cfg = serde_json::json!({"epochs": 10, "gamma": 0.3});
        let a = RunManifest::new("fit", cfg.clone(), vec![1]);
        let mut b = RunManifest::new("fit", cfg, vec![1]);
        b.timestamp += 100;
        assert_eq!(a.config_digest, b.config_digest);
    }
}
