//! `<artifact>.prov.json` sidecars. A step is skipped when its artifact
//! exists and the sidecar matches what the step would write now.

use crate::error::CliError;
use hypnokit_core::corpus::sha256_hex;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const TOOL: &str = "hypnokit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub step: String,
    pub config_sha256: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub input_sha256: String,
}

impl Provenance {
    pub fn new(step: &str, config_sha256: &str, seed: Option<u64>, input_sha256: String) -> Self {
        Provenance {
            tool: TOOL.into(),
            version: VERSION.into(),
            step: step.into(),
            config_sha256: config_sha256.into(),
            seed,
            input_sha256,
        }
    }
}

pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".prov.json");
    artifact.with_file_name(name)
}

pub fn read(artifact: &Path) -> Option<Provenance> {
    let text = std::fs::read_to_string(sidecar_path(artifact)).ok()?;
    serde_json::from_str(&text).ok()
}

pub fn is_up_to_date(artifact: &Path, expected: &Provenance) -> bool {
    artifact.exists() && read(artifact).as_ref() == Some(expected)
}

/// Written after the artifact, so an interrupted step is redone.
pub fn write(artifact: &Path, prov: &Provenance) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(prov).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(sidecar_path(artifact), text)?;
    Ok(())
}

/// Hash over file names and contents, in the given order.
pub fn hash_files(paths: &[PathBuf]) -> Result<String, CliError> {
    let mut acc = String::new();
    for p in paths {
        let bytes = std::fs::read(p).map_err(|e| CliError::input(p.display(), e))?;
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        acc.push_str(&name);
        acc.push(':');
        acc.push_str(&hex_digest(&bytes));
        acc.push('\n');
    }
    Ok(sha256_hex(&acc))
}

fn hex_digest(bytes: &[u8]) -> String {
    hypnokit_core::corpus::sha256_bytes_hex(bytes)
}

/// Fingerprint of an upstream artifact: its sidecar's content.
pub fn upstream_hash(artifacts: &[PathBuf]) -> Result<String, CliError> {
    let sidecars: Vec<PathBuf> = artifacts.iter().map(|a| sidecar_path(a)).collect();
    hash_files(&sidecars)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name_appends_suffix() {
        assert_eq!(sidecar_path(Path::new("a/b.csv")), PathBuf::from("a/b.csv.prov.json"));
        assert_eq!(sidecar_path(Path::new("a/imgs")), PathBuf::from("a/imgs.prov.json"));
    }

    #[test]
    fn up_to_date_needs_matching_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let art = dir.path().join("out.txt");
        let prov = Provenance::new("x", "c", Some(1), "i".into());
        assert!(!is_up_to_date(&art, &prov));
        std::fs::write(&art, "data").unwrap();
        assert!(!is_up_to_date(&art, &prov));
        write(&art, &prov).unwrap();
        assert!(is_up_to_date(&art, &prov));
        let other = Provenance::new("x", "c2", Some(1), "i".into());
        assert!(!is_up_to_date(&art, &other));
    }
}
