//! TOML pipeline configuration. Relative paths resolve against the
//! directory holding the config file.

use crate::error::CliError;
use hypnokit_core::corpus::sha256_hex;
use hypnokit_core::psg_io::ChannelManifest;
use hypnokit_core::{ConditioningConfig, DetectorConfig, RenderConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw recordings: subdirectories holding `recording.json`, or
    /// top-level `.json` sidecars and `.csv` files.
    pub recordings: PathBuf,
    /// Root for every derived artifact.
    pub work: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths { recordings: "recordings".into(), work: "work".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSettings {
    pub seed: u64,
    pub n_resamples: usize,
    pub level: f64,
}

impl Default for MetricsSettings {
    fn default() -> Self {
        MetricsSettings { seed: 20240601, n_resamples: 1000, level: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSettings {
    /// Epochs drawn per subject for expert review.
    pub k: usize,
    pub seed: u64,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        SamplingSettings { k: 10, seed: 20240602 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub manifest: ChannelManifest,
    pub conditioning: ConditioningConfig,
    pub render: RenderConfig,
    pub detectors: DetectorConfig,
    pub metrics: MetricsSettings,
    pub sampling: SamplingSettings,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Hash of the canonical serialization, so formatting and comments in
    /// the file do not matter.
    pub fn sha256(&self) -> Result<String, CliError> {
        Ok(sha256_hex(&self.to_toml_string()?))
    }
}

/// A loaded config together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub config: PipelineConfig,
    pub base: PathBuf,
    pub config_sha256: String,
}

impl Workspace {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config = PipelineConfig::from_toml_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(config, base)
    }

    pub fn new(config: PipelineConfig, base: PathBuf) -> Result<Self, CliError> {
        let config_sha256 = config.sha256()?;
        Ok(Workspace { config, base, config_sha256 })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn recordings_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.recordings)
    }

    pub fn work_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.work)
    }

    pub fn epochs_dir(&self, subject: &str) -> PathBuf {
        self.work_dir().join("epochs").join(subject)
    }

    pub fn images_root(&self) -> PathBuf {
        self.work_dir().join("images")
    }

    pub fn images_dir(&self, subject: &str) -> PathBuf {
        self.images_root().join(subject)
    }

    pub fn descriptors_path(&self, subject: &str) -> PathBuf {
        self.work_dir().join("descriptors").join(format!("{subject}.jsonl"))
    }

    pub fn stage_dir(&self) -> PathBuf {
        self.work_dir().join("stage")
    }

    pub fn hypnogram_path(&self, subject: &str) -> PathBuf {
        self.stage_dir().join(format!("{subject}.hypnogram.csv"))
    }

    pub fn rationale_path(&self, subject: &str) -> PathBuf {
        self.stage_dir().join(format!("{subject}.rationale.jsonl"))
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.work_dir().join("corpus")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.work_dir().join("eval")
    }

    /// Subjects that have completed `ingest`, sorted.
    pub fn ingested_subjects(&self) -> Result<Vec<String>, CliError> {
        let dir = self.work_dir().join("epochs");
        if !dir.is_dir() {
            return Err(CliError::Input(format!("{}: nothing ingested yet", dir.display())));
        }
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&dir)? {
            let entry = entry?;
            if entry.path().join("recording.json").is_file() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }
}
