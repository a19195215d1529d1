//! Run manifest written next to every artifact: the merged configuration,
//! seeds and checkpoint fingerprint needed to reproduce an output
//! byte-exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::grid::Dims;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub dims: Dims,
    pub t_max: usize,
    pub s: usize,
    pub eta: f64,
    pub amplitude: f64,
    pub seed: u64,
    /// Bit order of the secret stream; fixed for interoperability.
    pub bit_order: String,
    pub quantize: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_sha256: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub secret_bits: Option<usize>,
}

impl RunManifest {
    pub fn new(command: &str, dims: Dims, t_max: usize, s: usize) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            dims,
            t_max,
            s,
            eta: 0.0,
            amplitude: 1.0,
            seed: 0,
            bit_order: "msb-first".to_string(),
            quantize: true,
            checkpoint: None,
            checkpoint_sha256: None,
            oracle: None,
            secret_bits: None,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .expect("manifest serialization cannot fail");
        fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            crate::error::GsdError::InvalidArgument(format!("bad manifest: {e}"))
        })
    }
}

/// Hex SHA-256 of a file, used to fingerprint checkpoints in manifests.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let mut m = RunManifest::new("hide", Dims::new(1, 16, 16).unwrap(), 1000, 10);
        m.seed = 42;
        m.secret_bits = Some(256);
        m.write_json(&path).unwrap();
        let back = RunManifest::read_json(&path).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.secret_bits, Some(256));
        assert_eq!(back.dims, m.dims);
        assert_eq!(back.bit_order, "msb-first");
    }

    #[test]
    fn sha256_known_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f");
        std::fs::write(&path, b"abc").unwrap();
        assert_eq!(
            file_sha256(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
