//! Rating sessions and the append-only rating store.

use crate::error::CliError;
use hypnokit_core::{RuleId, Stage};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSample {
    pub sample_id: String,
    pub subject_id: String,
    pub epoch_index: usize,
    /// Previous, target and next image, relative to the image root.
    pub images: [String; 3],
    pub stage: Stage,
    pub rules: Vec<RuleId>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub seed: u64,
    pub k: usize,
    pub samples: Vec<SessionSample>,
}

impl Session {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(path.display(), e))?;
        let s: Session = serde_json::from_str(&text).map_err(|e| CliError::input(path.display(), e))?;
        let mut ids: Vec<&str> = s.samples.iter().map(|x| x.sample_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Input(format!("{}: duplicate sample ids", path.display())));
        }
        Ok(s)
    }
}

/// One stored rating: three rubric dimensions scored 0 to 5.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub sample_id: String,
    pub rater: String,
    pub dim1: u8,
    pub dim2: u8,
    pub dim3: u8,
    pub timestamp: String,
}

impl RatingRecord {
    pub fn scores(&self) -> [u8; 3] {
        [self.dim1, self.dim2, self.dim3]
    }
}

pub fn load_store(path: &Path) -> Result<Vec<RatingRecord>, CliError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::input(format!("{}:{}", path.display(), i + 1), e)))
        .collect()
}
