//! Annotation records and training-sample assembly for the perception
//! (phase 1) and rule-grounded (phase 2) corpora.
//!
//! Prompts are text resources compiled into the binary; every sample
//! records the SHA-256 of the exact prompt it carries.

use crate::descriptors::{serialize_phase1_target, DescriptorFrame};
use crate::rules::{RuleId, Stage, StageDecision};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

/// Bumped whenever any prompt resource changes.
pub const PROMPT_VERSION: &str = "v1";

pub const PHASE1_PROMPT: &str = include_str!("../resources/prompts/phase1.txt");
const P2_ROLE: &str = include_str!("../resources/prompts/phase2_role.txt");
const P2_RENDERING: &str = include_str!("../resources/prompts/phase2_rendering.txt");
const P2_RULES: &str = include_str!("../resources/prompts/phase2_rules.txt");
const P2_INPUT: &str = include_str!("../resources/prompts/phase2_input.txt");
const P2_STEPS: &str = include_str!("../resources/prompts/phase2_steps.txt");
const P2_OUT_FINE: &str = include_str!("../resources/prompts/phase2_output_fine.txt");
const P2_OUT_COARSE: &str = include_str!("../resources/prompts/phase2_output_coarse.txt");

/// Anchored 0-5 descriptions for the three rating dimensions.
pub const RUBRIC_JSON: &str = include_str!("../resources/prompts/rubric.json");

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("track error: {0}")]
    Track(String),
    #[error("invalid record: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    Fine,
    Coarse,
}

impl fmt::Display for Track {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Track::Fine => "fine",
            Track::Coarse => "coarse",
        })
    }
}

impl FromStr for Track {
    type Err = CorpusError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fine" => Ok(Track::Fine),
            "coarse" => Ok(Track::Coarse),
            other => Err(CorpusError::Track(format!("unknown track {other:?}"))),
        }
    }
}

/// `<subject>_<epoch:05>`, the join key between annotations, images and
/// candidate responses.
pub fn epoch_id(subject_id: &str, epoch_index: usize) -> String {
    format!("{subject_id}_{epoch_index:05}")
}

pub fn parse_epoch_id(id: &str) -> Option<(&str, usize)> {
    let (subject, idx) = id.rsplit_once('_')?;
    if subject.is_empty() || idx.is_empty() || !idx.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    Some((subject, idx.parse().ok()?))
}

/// One annotated central epoch. Fine records carry `reasoning_text`,
/// coarse ones do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub subject_id: String,
    pub epoch_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning_text: Option<String>,
    pub applicable_rules: Vec<RuleId>,
    pub sleep_stage: Stage,
}

impl AnnotationRecord {
    pub fn track(&self) -> Track {
        if self.reasoning_text.is_some() {
            Track::Fine
        } else {
            Track::Coarse
        }
    }

    pub fn epoch_id(&self) -> String {
        epoch_id(&self.subject_id, self.epoch_index)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.applicable_rules.is_empty() {
            return Err(CorpusError::Invalid(format!("{}: empty rule list", self.epoch_id())));
        }
        if self.subject_id.is_empty() {
            return Err(CorpusError::Invalid("empty subject id".into()));
        }
        Ok(())
    }

    /// Fine record from an engine decision. Fallback decisions cite no
    /// rule and therefore yield `None`.
    pub fn from_decision(subject_id: &str, d: &StageDecision) -> Option<Self> {
        if d.rules.is_empty() {
            return None;
        }
        Some(AnnotationRecord {
            subject_id: subject_id.to_string(),
            epoch_index: d.epoch_index,
            reasoning_text: d.rationale.clone(),
            applicable_rules: d.rules.clone(),
            sleep_stage: d.stage,
        })
    }

    pub fn to_coarse(&self) -> Self {
        AnnotationRecord { reasoning_text: None, ..self.clone() }
    }
}

pub fn write_annotations(records: &[AnnotationRecord], path: &Path) -> Result<(), CorpusError> {
    for r in records {
        r.validate()?;
    }
    write_jsonl(records, path)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnnotationRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Parse { line: i + 1, message: e.to_string() })?;
        rec.validate().map_err(|e| CorpusError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub(crate) fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<(), CorpusError> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| CorpusError::Invalid(e.to_string()))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineTarget {
    pub reasoning_text: String,
    pub applicable_rules: Vec<RuleId>,
    pub sleep_stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseTarget {
    pub applicable_rules: Vec<RuleId>,
    pub sleep_stage: Stage,
}

pub fn parse_fine_target(text: &str) -> Result<FineTarget, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn parse_coarse_target(text: &str) -> Result<CoarseTarget, serde_json::Error> {
    serde_json::from_str(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub id: String,
    pub phase: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track: Option<Track>,
    pub prompt_version: String,
    pub prompt_sha256: String,
    pub system_prompt: String,
    pub images: Vec<String>,
    pub target: String,
}

pub fn sha256_hex(text: &str) -> String {
    sha256_bytes_hex(text.as_bytes())
}

pub fn sha256_bytes_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// The criterion line for `rule` from the rule section of the phase-2
/// prompt, without its list marker.
pub fn rule_text(rule: RuleId) -> &'static str {
    let prefix = format!("- {} (", rule.as_str());
    P2_RULES
        .lines()
        .find(|l| l.starts_with(&prefix))
        .map(|l| &l[2..])
        .unwrap_or("")
}

pub fn phase1_prompt() -> &'static str {
    PHASE1_PROMPT
}

/// The five prompt sections joined in order. The coarse track drops the
/// rationale step and uses the two-key output template.
pub fn phase2_prompt(track: Track) -> String {
    let steps = strip_block(P2_STEPS, "{{#fine}}", "{{/fine}}", track == Track::Fine);
    let output = match track {
        Track::Fine => P2_OUT_FINE,
        Track::Coarse => P2_OUT_COARSE,
    };
    [P2_ROLE, P2_RENDERING, P2_RULES, P2_INPUT, steps.as_str(), output].join("\n")
}

fn strip_block(text: &str, open: &str, close: &str, keep: bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(a) = rest.find(open) {
        out.push_str(&rest[..a]);
        let after = &rest[a + open.len()..];
        let b = after.find(close).unwrap_or(after.len());
        if keep {
            out.push_str(&after[..b]);
        }
        rest = after.get(b + close.len()..).unwrap_or("");
    }
    out.push_str(rest);
    out
}

pub fn build_phase1_sample(id: &str, image: &str, frame: &DescriptorFrame) -> TrainingSample {
    TrainingSample {
        id: id.to_string(),
        phase: 1,
        track: None,
        prompt_version: PROMPT_VERSION.to_string(),
        prompt_sha256: sha256_hex(PHASE1_PROMPT),
        system_prompt: PHASE1_PROMPT.to_string(),
        images: vec![image.to_string()],
        target: serialize_phase1_target(frame),
    }
}

/// `images` are the previous, target and next epoch paths in that order.
pub fn build_phase2_sample(
    images: [&str; 3],
    annotation: &AnnotationRecord,
    track: Track,
) -> Result<TrainingSample, CorpusError> {
    annotation.validate()?;
    let target = match track {
        Track::Fine => {
            let reasoning_text = annotation.reasoning_text.clone().ok_or_else(|| {
                CorpusError::Track(format!("{}: fine track needs reasoning_text", annotation.epoch_id()))
            })?;
            serde_json::to_string(&FineTarget {
                reasoning_text,
                applicable_rules: annotation.applicable_rules.clone(),
                sleep_stage: annotation.sleep_stage,
            })
        }
        Track::Coarse => serde_json::to_string(&CoarseTarget {
            applicable_rules: annotation.applicable_rules.clone(),
            sleep_stage: annotation.sleep_stage,
        }),
    }
    .map_err(|e| CorpusError::Invalid(e.to_string()))?;
    let prompt = phase2_prompt(track);
    Ok(TrainingSample {
        id: annotation.epoch_id(),
        phase: 2,
        track: Some(track),
        prompt_version: PROMPT_VERSION.to_string(),
        prompt_sha256: sha256_hex(&prompt),
        system_prompt: prompt,
        images: images.iter().map(|s| s.to_string()).collect(),
        target,
    })
}

pub fn write_samples(samples: &[TrainingSample], path: &Path) -> Result<(), CorpusError> {
    write_jsonl(samples, path)
}
